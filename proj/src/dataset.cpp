#include "ims/synth.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ims {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kDatasetFormat = "ims-dataset";
constexpr int kDatasetVersion = 1;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("invalid number '" + std::string(s) + "'", line);
  }
  return v;
}

const char* provenance_name(Provenance p) {
  return p == Provenance::Synthetic ? "synthetic" : "imported";
}

}  // namespace

void write_fields_csv(std::ostream& out, std::span<const double> fill_time,
                      std::span<const double> deflection) {
  if (fill_time.size() != deflection.size()) {
    throw std::invalid_argument("fill time and deflection fields differ in length");
  }
  out << "vertex_id,fill_time,deflection\n";
  for (std::size_t v = 0; v < fill_time.size(); ++v) {
    out << v << ',' << format_double(fill_time[v]) << ',' << format_double(deflection[v]) << '\n';
  }
}

FieldColumns read_fields_csv(std::istream& in, std::size_t vertex_count) {
  FieldColumns cols;
  cols.fill_time.assign(vertex_count, 0.0);
  cols.deflection.assign(vertex_count, 0.0);
  std::vector<std::uint8_t> seen(vertex_count, 0);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty fields file", 0);
  ++line_no;
  if (line.rfind("vertex_id,fill_time,deflection", 0) != 0) {
    throw ParseError("expected header vertex_id,fill_time,deflection", line_no);
  }
  std::size_t count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw ParseError("expected three columns", line_no);
    const std::string_view sv(line);
    const double id = parse_double(sv.substr(0, c1), line_no);
    if (!(id >= 0) || id != static_cast<double>(static_cast<std::size_t>(id)) ||
        static_cast<std::size_t>(id) >= vertex_count) {
      throw ParseError("vertex id out of range", line_no);
    }
    const auto v = static_cast<std::size_t>(id);
    if (seen[v]) throw ParseError("duplicate vertex id " + std::to_string(v), line_no);
    seen[v] = 1;
    cols.fill_time[v] = parse_double(sv.substr(c1 + 1, c2 - c1 - 1), line_no);
    cols.deflection[v] = parse_double(sv.substr(c2 + 1), line_no);
    ++count;
  }
  if (count != vertex_count) {
    throw ParseError("fields file has " + std::to_string(count) + " rows for " +
                         std::to_string(vertex_count) + " vertices",
                     line_no);
  }
  return cols;
}

void save_dataset(const fs::path& dir, const std::vector<SimulationSample>& samples,
                  const json& extra) {
  fs::create_directories(dir);
  json entries = json::array();
  for (const auto& s : samples) {
    s.validate();
    const auto mesh_file = s.name + ".obj";
    const auto gates_file = s.name + ".gates.json";
    save_obj(dir / mesh_file, s.mesh);
    save_gates(dir / gates_file, s.gates);
    json entry = {{"name", s.name},
                  {"mesh", mesh_file},
                  {"gates", gates_file},
                  {"vertex_count", s.mesh.vertex_count()},
                  {"face_count", s.mesh.face_count()},
                  {"gate_count", s.gates.gates.size()},
                  {"provenance", provenance_name(s.provenance)}};
    if (s.has_truth()) {
      const auto fields_file = s.name + ".fields.csv";
      std::ofstream out(dir / fields_file);
      if (!out) throw std::runtime_error("cannot write " + (dir / fields_file).string());
      write_fields_csv(out, *s.fill_time, *s.deflection);
      entry["fields"] = fields_file;
    }
    entries.push_back(std::move(entry));
  }
  json manifest = {{"format", kDatasetFormat}, {"version", kDatasetVersion}, {"samples", entries}};
  for (const auto& [key, value] : extra.items()) manifest[key] = value;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

std::vector<SimulationSample> load_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
  const auto manifest = json::parse(in);
  if (manifest.value("format", "") != kDatasetFormat) {
    throw std::runtime_error(dir.string() + ": not a dataset manifest");
  }
  std::vector<SimulationSample> out;
  for (const auto& entry : manifest.at("samples")) {
    std::optional<fs::path> fields;
    if (entry.contains("fields")) fields = dir / entry.at("fields").get<std::string>();
    auto sample = import_sample(dir / entry.at("mesh").get<std::string>(),
                                dir / entry.at("gates").get<std::string>(), fields);
    sample.name = entry.at("name").get<std::string>();
    sample.provenance =
        entry.value("provenance", "imported") == "synthetic" ? Provenance::Synthetic : Provenance::Imported;
    out.push_back(std::move(sample));
  }
  return out;
}

SimulationSample import_sample(const fs::path& mesh_path, const fs::path& gates_path,
                               const std::optional<fs::path>& fields_path) {
  SimulationSample s;
  s.name = mesh_path.stem().string();
  s.mesh = load_mesh(mesh_path);
  s.gates = load_gates(gates_path, s.mesh);
  s.provenance = Provenance::Imported;
  if (fields_path) {
    std::ifstream in(*fields_path);
    if (!in) throw std::runtime_error("cannot open " + fields_path->string());
    auto cols = read_fields_csv(in, s.mesh.vertex_count());
    s.fill_time = std::move(cols.fill_time);
    s.deflection = std::move(cols.deflection);
  }
  s.validate();
  return s;
}

}  // namespace ims
