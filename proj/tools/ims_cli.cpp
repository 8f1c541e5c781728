// ims: command-line front end for dataset generation, training, prediction,
// cross-validation, benchmarking and the HTTP service.

#include "ims/pipeline.hpp"
#include "ims/service.hpp"
#include "ims/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void note(const std::string& msg) { std::cerr << msg << std::endl; }

// Pipeline settings: defaults, then the config file, then flags.
struct PipelineFlags {
  fs::path config;
  std::optional<int> epochs, batch_size, estimators, depth;
  std::optional<double> step_size, learning_rate;

  void add(CLI::App* app) {
    app->add_option("--config", config, "Pipeline configuration (JSON)")->check(CLI::ExistingFile);
    app->add_option("--epochs", epochs, "CNN training epochs");
    app->add_option("--batch-size", batch_size, "CNN batch size");
    app->add_option("--step-size", step_size, "CNN optimizer step size");
    app->add_option("--estimators", estimators, "GBM boosting rounds");
    app->add_option("--depth", depth, "GBM tree depth");
    app->add_option("--learning-rate", learning_rate, "GBM learning rate");
  }

  ims::PipelineConfig resolve(std::uint64_t seed) const {
    ims::PipelineConfig c;
    if (!config.empty()) c = ims::pipeline_config_from_json(read_json(config), c);
    if (epochs) c.cnn.epochs = *epochs;
    if (batch_size) c.cnn.batch_size = *batch_size;
    if (step_size) c.cnn.step_size = *step_size;
    if (estimators) c.gbm.n_estimators = *estimators;
    if (depth) c.gbm.max_depth = *depth;
    if (learning_rate) c.gbm.learning_rate = *learning_rate;
    c.smoothing_seed = seed;
    c.validate();
    return c;
  }
};

std::vector<const ims::SimulationSample*> pointers(const std::vector<ims::SimulationSample>& s) {
  std::vector<const ims::SimulationSample*> out;
  for (const auto& x : s) out.push_back(&x);
  return out;
}

struct ModelPaths {
  fs::path fill_model, weights, manifest;

  void add(CLI::App* app, bool weights_required) {
    app->add_option("--fill-model", fill_model, "Fill-time model (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    auto* w = app->add_option("--weights", weights, "Deflection weight blob")->check(CLI::ExistingFile);
    auto* m = app->add_option("--manifest", manifest, "Deflection weight manifest (JSON)")
                  ->check(CLI::ExistingFile);
    if (weights_required) {
      w->required();
      m->required();
    } else {
      w->needs(m);
      m->needs(w);
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Injection molding surrogate: fill time and deflection prediction"};
  app.require_subcommand(1);

  // ---- synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
  fs::path synth_out, synth_config;
  std::uint64_t synth_seed = 0;
  std::optional<int> synth_samples, synth_min_v, synth_max_v, synth_min_g, synth_max_g;
  std::optional<double> synth_speed;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Random seed")->required();
  synth->add_option("--config", synth_config, "Generator configuration (JSON)")
      ->check(CLI::ExistingFile);
  synth->add_option("--samples", synth_samples, "Number of samples");
  synth->add_option("--min-vertices", synth_min_v, "Minimum vertex count");
  synth->add_option("--max-vertices", synth_max_v, "Maximum vertex count");
  synth->add_option("--min-gates", synth_min_g, "Minimum gate count");
  synth->add_option("--max-gates", synth_max_g, "Maximum gate count");
  synth->add_option("--flow-speed", synth_speed, "Flow front speed (mm/s)");

  // ---- train-filltime
  auto* train_fill = app.add_subcommand("train-filltime", "Train the fill-time GBM");
  fs::path tf_dataset, tf_out, tf_history;
  std::uint64_t tf_seed = 0;
  PipelineFlags tf_flags;
  train_fill->add_option("--dataset", tf_dataset, "Dataset directory")->required();
  train_fill->add_option("--out", tf_out, "Model output (JSON)")->required();
  train_fill->add_option("--seed", tf_seed, "Subsampling seed")->required();
  train_fill->add_option("--history", tf_history, "Training MSE per round (CSV)");
  tf_flags.add(train_fill);

  // ---- train-deflection
  auto* train_defl = app.add_subcommand("train-deflection", "Train the deflection CNN");
  fs::path td_dataset, td_fill, td_weights, td_manifest, td_log;
  std::uint64_t td_seed = 0;
  PipelineFlags td_flags;
  train_defl->add_option("--dataset", td_dataset, "Dataset directory")->required();
  train_defl->add_option("--fill-model", td_fill, "Fill-time model (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  train_defl->add_option("--out-weights", td_weights, "Weight blob output")->required();
  train_defl->add_option("--out-manifest", td_manifest, "Weight manifest output")->required();
  train_defl->add_option("--seed", td_seed, "Initialization, shuffling and subsampling seed")
      ->required();
  train_defl->add_option("--log", td_log, "Training log (CSV epoch,loss)");
  td_flags.add(train_defl);

  // ---- predict
  auto* pred = app.add_subcommand("predict", "Predict per-vertex fill time and deflection");
  ModelPaths pred_models;
  fs::path pred_mesh, pred_gates, pred_out;
  std::uint64_t pred_seed = 0;
  pred_models.add(pred, false);
  pred->add_option("--mesh", pred_mesh, "Mesh (.obj or .pat)")->required()->check(CLI::ExistingFile);
  pred->add_option("--gates", pred_gates, "Gates (JSON)")->required()->check(CLI::ExistingFile);
  pred->add_option("--out", pred_out, "Output CSV (vertex_id,fill_time,deflection)")->required();
  pred->add_option("--seed", pred_seed, "Smoothing subsample seed")->required();

  // ---- crossvalidate
  auto* cv = app.add_subcommand("crossvalidate", "K-fold cross-validation of the full pipeline");
  fs::path cv_dataset, cv_out, cv_dump;
  std::uint64_t cv_seed = 0;
  int cv_folds = 5;
  PipelineFlags cv_flags;
  cv->add_option("--dataset", cv_dataset, "Dataset directory")->required();
  cv->add_option("--out", cv_out, "Report output (JSON)")->required();
  cv->add_option("--seed", cv_seed, "Seed for folds, subsampling and training")->required();
  cv->add_option("--folds", cv_folds, "Number of folds")->capture_default_str();
  cv->add_option("--dump", cv_dump, "Per-point predictions (CSV)");
  cv_flags.add(cv);

  // ---- benchmark
  auto* bench = app.add_subcommand("benchmark", "Time the three prediction stages");
  ModelPaths bench_models;
  fs::path bench_mesh, bench_gates, bench_out;
  std::uint64_t bench_seed = 0;
  int bench_repeat = 1;
  bench_models.add(bench, true);
  bench->add_option("--mesh", bench_mesh, "Mesh (.obj or .pat)")->required()->check(CLI::ExistingFile);
  bench->add_option("--gates", bench_gates, "Gates (JSON)")->required()->check(CLI::ExistingFile);
  bench->add_option("--seed", bench_seed, "Smoothing subsample seed")->required();
  bench->add_option("--repeat", bench_repeat, "Number of timed runs")->capture_default_str();
  bench->add_option("--out", bench_out, "Output (JSON); stdout when omitted");

  // ---- serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP prediction service");
  ims::ServiceConfig serve_cfg;
  serve->add_option("--fill-model", serve_cfg.fill_model, "Fill-time model (JSON)");
  serve->add_option("--weights", serve_cfg.weights, "Deflection weight blob");
  serve->add_option("--manifest", serve_cfg.weights_manifest, "Deflection weight manifest");
  serve->add_option("--host", serve_cfg.host, "Bind address")->capture_default_str();
  serve->add_option("--port", serve_cfg.port, "Port")->capture_default_str();
  serve->add_option("--capacity", serve_cfg.session_capacity, "Mesh sessions kept")
      ->capture_default_str();
  serve->add_option("--seed", serve_cfg.smoothing_seed, "Default smoothing subsample seed")
      ->capture_default_str();
  serve->add_option("--cors-origin", serve_cfg.cors_origin, "Allowed CORS origin")
      ->capture_default_str();

  // ---- export-debug
  auto* dbg = app.add_subcommand("export-debug", "Write rasters and coarse maps as PGM images");
  fs::path dbg_mesh, dbg_gates, dbg_fields, dbg_out;
  dbg->add_option("--mesh", dbg_mesh, "Mesh (.obj or .pat)")->required()->check(CLI::ExistingFile);
  dbg->add_option("--gates", dbg_gates, "Gates (JSON)")->required()->check(CLI::ExistingFile);
  dbg->add_option("--fields", dbg_fields, "Per-vertex fields (CSV)")
      ->required()
      ->check(CLI::ExistingFile);
  dbg->add_option("--out-dir", dbg_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      ims::SynthConfig c;
      if (!synth_config.empty()) c = ims::synth_config_from_json(read_json(synth_config), c);
      if (synth_samples) c.sample_count = *synth_samples;
      if (synth_min_v) c.min_vertices = *synth_min_v;
      if (synth_max_v) c.max_vertices = *synth_max_v;
      if (synth_min_g) c.min_gates = *synth_min_g;
      if (synth_max_g) c.max_gates = *synth_max_g;
      if (synth_speed) c.flow_speed = *synth_speed;
      c.seed = synth_seed;
      const auto samples = ims::synth_generate(c);
      ims::save_dataset(synth_out, samples, {{"synth_config", ims::to_json(c)}});
      note("wrote " + std::to_string(samples.size()) + " samples to " + synth_out.string());
    } else if (*train_fill) {
      const auto config = tf_flags.resolve(tf_seed);
      const auto samples = ims::load_dataset(tf_dataset);
      std::vector<double> history;
      const auto model = ims::train_fill_time(pointers(samples), config, tf_seed, &history);
      model.save(tf_out);
      if (!tf_history.empty()) {
        std::string csv = "round,mse\n";
        for (std::size_t i = 0; i < history.size(); ++i) csv += std::to_string(i) + "," + g17(history[i]) + "\n";
        write_text(tf_history, csv);
      }
      note("training MSE " + g17(history.front()) + " -> " + g17(history.back()));
    } else if (*train_defl) {
      const auto config = td_flags.resolve(td_seed);
      const auto samples = ims::load_dataset(td_dataset);
      const auto fill_model = ims::FillTimeModel::load(td_fill);
      std::string csv = "epoch,loss\n";
      ims::cnn::TrainResult result;
      const auto net = ims::train_deflection(
          pointers(samples), fill_model, config, td_seed, &result, [&](int epoch, double loss) {
            note("epoch " + std::to_string(epoch + 1) + " loss " + g17(loss));
          });
      for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
        csv += std::to_string(e + 1) + "," + g17(result.loss_history[e]) + "\n";
      }
      if (!td_log.empty()) write_text(td_log, csv);
      ims::cnn::save_weights(net, td_weights, td_manifest);
    } else if (*pred) {
      const auto fill_model = ims::FillTimeModel::load(pred_models.fill_model);
      std::optional<ims::cnn::DeflectionNet> net;
      if (!pred_models.weights.empty()) {
        net = ims::cnn::load_weights(pred_models.weights, pred_models.manifest);
      }
      const auto mesh = ims::load_mesh(pred_mesh);
      const auto gates = ims::load_gates(pred_gates, mesh);
      const auto result = ims::predict(fill_model, net ? &*net : nullptr, mesh, gates,
                                       {true, net.has_value(), pred_seed});
      const std::vector<double> no_deflection(mesh.vertex_count(), std::nan(""));
      std::ostringstream out;
      ims::write_fields_csv(out, result.fill_time, result.deflection ? *result.deflection : no_deflection);
      write_text(pred_out, out.str());
    } else if (*cv) {
      const auto config = cv_flags.resolve(cv_seed);
      const auto samples = ims::load_dataset(cv_dataset);
      std::vector<ims::PointRecord> points;
      const auto report = ims::crossvalidate(samples, cv_folds, config, cv_seed,
                                             cv_dump.empty() ? nullptr : &points, note);
      auto doc = report.to_json();
      doc["config"] = ims::to_json(config);
      doc["seed"] = cv_seed;
      write_text(cv_out, doc.dump(2) + "\n");
      if (!cv_dump.empty()) {
        std::string csv = "fold,sample,vertex_id,true_fill_time,pred_fill_time,true_deflection,pred_deflection\n";
        for (const auto& p : points) {
          csv += std::to_string(p.fold) + "," + std::to_string(p.sample) + "," + std::to_string(p.vertex) +
                 "," + g17(p.true_fill) + "," + g17(p.pred_fill) + "," + g17(p.true_deflection) + "," +
                 g17(p.pred_deflection) + "\n";
        }
        write_text(cv_dump, csv);
      }
      note("pooled fill-time RMSE " + g17(report.pooled_fill_time.pooled_rmse) + ", deflection RMSE " +
          g17(report.pooled_deflection.pooled_rmse) + " (baseline " +
          g17(report.pooled_baseline_deflection.pooled_rmse) + ")");
    } else if (*bench) {
      const auto fill_model = ims::FillTimeModel::load(bench_models.fill_model);
      const auto net = ims::cnn::load_weights(bench_models.weights, bench_models.manifest);
      const auto mesh_text = read_text(bench_mesh);
      const auto gates_doc = read_json(bench_gates);
      json runs = json::array();
      for (int r = 0; r < std::max(1, bench_repeat); ++r) {
        runs.push_back(ims::benchmark(fill_model, net, mesh_text, gates_doc, bench_seed).to_json());
      }
      const auto text = (bench_repeat <= 1 ? runs[0] : json{{"runs", runs}}).dump(2) + "\n";
      if (bench_out.empty()) {
        std::cout << text;
      } else {
        write_text(bench_out, text);
      }
    } else if (*serve) {
      ims::Service service(serve_cfg);
      const auto h = service.health().body;
      note("status " + h["status"].get<std::string>() + "; listening on " + serve_cfg.host + ":" +
          std::to_string(serve_cfg.port));
      for (const auto& m : h["missing"]) note("  missing: " + m.get<std::string>());
      service.run();
    } else if (*dbg) {
      const auto mesh = ims::load_mesh(dbg_mesh);
      const auto gates = ims::load_gates(dbg_gates, mesh);
      std::ifstream fin(dbg_fields);
      const auto fields = ims::read_fields_csv(fin, mesh.vertex_count());
      fs::create_directories(dbg_out);
      const auto plane = ims::fit_plane(mesh.vertices());
      const auto [fill, corr] = ims::project(mesh, fields.fill_time, plane);
      const auto defl = ims::project_like(fill, mesh, corr, fields.deflection);
      ims::Grid2D mask(fill.height(), fill.width());
      for (std::size_t i = 0; i < fill.mask.size(); ++i) mask.values[i] = fill.mask[i];
      const auto coarse = ims::downsample_masked(defl);
      auto save = [&](const std::string& name, const ims::Grid2D& g) {
        const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
        std::ofstream out(dbg_out / name, std::ios::binary);
        ims::write_pgm(out, g, *lo, *hi);
      };
      save("fill_time.pgm", fill.values);
      save("mask.pgm", mask);
      save("deflection.pgm", defl.values);
      save("deflection_12x24.pgm", coarse);
      json info = {{"scale_mm_per_px", fill.scale},
                   {"offset_col", fill.offset_col},
                   {"offset_row", fill.offset_row},
                   {"mask_pixels", fill.mask_count()},
                   {"plane",
                    {{"origin", {plane.origin.x(), plane.origin.y(), plane.origin.z()}},
                     {"basis_u", {plane.basis_u.x(), plane.basis_u.y(), plane.basis_u.z()}},
                     {"basis_v", {plane.basis_v.x(), plane.basis_v.y(), plane.basis_v.z()}},
                     {"normal", {plane.normal.x(), plane.normal.y(), plane.normal.z()}}}},
                   {"gates", gates.gates.size()}};
      write_text(dbg_out / "raster.json", info.dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
