#include "ims/service.hpp"

#include <httplib.h>

#include <cstdio>
#include <fstream>

namespace ims {
namespace {

using json = nlohmann::json;

ServiceResponse error(int status, const std::string& message, json extra = json::object()) {
  extra["error"] = message;
  return {status, std::move(extra), {}};
}

json point_json(const Point3& p) { return json::array({p.x(), p.y(), p.z()}); }

}  // namespace

std::string file_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

// ---- sessions ---------------------------------------------------------------

Session::Session(Mesh mesh) : mesh_(std::move(mesh)), graph_(mesh_) {}

std::vector<double> Session::distances(VertexId node) {
  {
    std::lock_guard lock(mutex_);
    if (const auto it = cache_.find(node); it != cache_.end()) return *it->second;
  }
  auto row = std::make_shared<const std::vector<double>>(geodesic_distances(graph_, node));
  std::lock_guard lock(mutex_);
  return *cache_.emplace(node, std::move(row)).first->second;
}

std::size_t Session::cached_rows() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

SessionStore::SessionStore(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("session capacity must be >= 1");
}

std::string SessionStore::add(Mesh mesh) {
  auto session = std::make_shared<Session>(std::move(mesh));
  std::lock_guard lock(mutex_);
  char id[32];
  std::snprintf(id, sizeof id, "mesh-%08llu", static_cast<unsigned long long>(next_id_++));
  std::string handle = id;
  order_.push_front(handle);
  entries_.emplace(handle, Entry{std::move(session), order_.begin()});
  while (entries_.size() > capacity_) {
    entries_.erase(order_.back());
    order_.pop_back();
  }
  return handle;
}

std::shared_ptr<Session> SessionStore::get(const std::string& handle) {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(handle);
  if (it == entries_.end()) return nullptr;
  order_.splice(order_.begin(), order_, it->second.position);
  return it->second.session;
}

bool SessionStore::contains(const std::string& handle) const {
  std::lock_guard lock(mutex_);
  return entries_.count(handle) != 0;
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::vector<std::string> SessionStore::handles() const {
  std::lock_guard lock(mutex_);
  return {order_.begin(), order_.end()};
}

// ---- service ----------------------------------------------------------------

Service::Service(ServiceConfig config)
    : config_(std::move(config)),
      sessions_(config_.session_capacity),
      started_(std::chrono::steady_clock::now()) {
  if (config_.fill_model.empty()) {
    problems_.push_back("fill-time model: no path configured");
  } else {
    try {
      fill_model_ = FillTimeModel::load(config_.fill_model);
      fill_version_ = "filltime-" + file_fingerprint(config_.fill_model);
    } catch (const std::exception& e) {
      problems_.push_back("fill-time model " + config_.fill_model.string() + ": " + e.what());
    }
  }
  if (config_.weights.empty() || config_.weights_manifest.empty()) {
    problems_.push_back("deflection weights: no path configured");
  } else {
    try {
      net_ = cnn::load_weights(config_.weights, config_.weights_manifest);
      deflection_version_ = "deflection-" + file_fingerprint(config_.weights);
    } catch (const std::exception& e) {
      problems_.push_back("deflection weights " + config_.weights.string() + ": " + e.what());
    }
  }
}

ServiceResponse Service::upload_mesh(std::string_view body) {
  if (body.size() > config_.max_upload_bytes) {
    return error(413, "mesh upload of " + std::to_string(body.size()) + " bytes exceeds the limit of " +
                          std::to_string(config_.max_upload_bytes));
  }
  Mesh mesh;
  try {
    mesh = parse_mesh(body);
  } catch (const ParseError& e) {
    return error(400, e.what(), {{"line", e.line()}});
  } catch (const std::exception& e) {
    return error(400, e.what());
  }
  if (mesh.vertex_count() == 0) return error(400, "mesh has no vertices");
  const auto [lo, hi] = mesh.bounding_box();
  json body_out = {{"vertex_count", mesh.vertex_count()},
                   {"face_count", mesh.face_count()},
                   {"bounding_box", {{"min", point_json(lo)}, {"max", point_json(hi)}}}};
  body_out["handle"] = sessions_.add(std::move(mesh));
  return {200, std::move(body_out), {}};
}

ServiceResponse Service::predict(const std::string& body) {
  json request;
  try {
    request = json::parse(body);
  } catch (const json::exception& e) {
    return error(400, std::string("request is not valid JSON: ") + e.what());
  }
  if (!request.is_object() || !request.contains("handle") || !request["handle"].is_string()) {
    return error(400, "request needs a string 'handle'");
  }
  if (!request.contains("gates") || !request["gates"].is_array()) {
    return error(400, "request needs a 'gates' array");
  }
  bool want_fill = true, want_defl = true;
  if (const auto it = request.find("targets"); it != request.end()) {
    if (!it->is_array()) return error(400, "'targets' must be an array");
    want_fill = want_defl = false;
    for (const auto& t : *it) {
      const auto name = t.is_string() ? t.get<std::string>() : std::string();
      if (name == "fill_time") {
        want_fill = true;
      } else if (name == "deflection") {
        want_defl = true;
      } else {
        return error(400, "unknown target '" + t.dump() + "'");
      }
    }
    if (!want_fill && !want_defl) return error(400, "no targets requested");
  }
  if (!fill_model_) return error(503, "fill-time model not loaded");
  if (want_defl && !net_) return error(503, "deflection weights not loaded");

  const auto handle = request["handle"].get<std::string>();
  auto session = sessions_.get(handle);
  if (!session) return error(404, "unknown mesh handle '" + handle + "'");

  GateSet gates;
  try {
    gates = gates_from_json(request, session->mesh());
    if (gates.gates.empty()) return error(422, "at least one gate is required");
  } catch (const GateError& e) {
    return error(422, e.what(), {{"gate_index", e.gate_index()}});
  } catch (const std::exception& e) {
    return error(422, e.what());
  }

  PredictOptions options;
  options.deflection = want_defl;
  options.seed = config_.smoothing_seed;
  if (const auto it = request.find("seed"); it != request.end()) {
    if (!it->is_number_unsigned()) return error(400, "'seed' must be a non-negative integer");
    options.seed = it->get<std::uint64_t>();
  }

  Prediction result;
  try {
    result = ims::predict(*fill_model_, want_defl ? &*net_ : nullptr, session->mesh(),
                          session->graph(), gates, options,
                          [&](VertexId node) { return session->distances(node); });
  } catch (const std::exception& e) {
    return error(422, e.what());
  }

  json out = {{"handle", handle}, {"vertex_count", session->mesh().vertex_count()}};
  if (want_fill) out["fill_time"] = result.fill_time;
  if (want_defl) out["deflection"] = *result.deflection;
  json models = {{"fill_time", fill_version_}};
  if (want_defl) models["deflection"] = deflection_version_;
  out["models"] = models;
  const auto& t = result.timings;
  if (request.value("include_timings", false)) {
    out["timings"] = {{"preprocessing", t.preprocessing},
                      {"fill_time", t.fill_time},
                      {"deflection", t.deflection},
                      {"total", t.total}};
  }
  char timing[256];
  std::snprintf(timing, sizeof timing,
                "preprocessing;dur=%.3f, fill_time;dur=%.3f, deflection;dur=%.3f, total;dur=%.3f",
                t.preprocessing * 1e3, t.fill_time * 1e3, t.deflection * 1e3, t.total * 1e3);
  return {200, std::move(out), {{"Server-Timing", timing}}};
}

ServiceResponse Service::health() const {
  const double uptime =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  json models = {
      {"fill_time",
       {{"loaded", fill_model_.has_value()},
        {"path", config_.fill_model.string()},
        {"version", fill_model_ ? json(fill_version_) : json(nullptr)}}},
      {"deflection",
       {{"loaded", net_.has_value()},
        {"path", config_.weights.string()},
        {"version", net_ ? json(deflection_version_) : json(nullptr)}}}};
  json body = {{"status", fill_model_ && net_ ? "ok" : "degraded"},
               {"models", models},
               {"missing", problems_},
               {"uptime_seconds", uptime}};
  return {200, std::move(body), {}};
}

void Service::install(httplib::Server& server) {
  const auto origin = config_.cors_origin;
  server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                              {"Access-Control-Expose-Headers", "Server-Timing"}});
  // Let oversized uploads reach the handler so it can answer with a JSON 413.
  server.set_payload_max_length(config_.max_upload_bytes + 1);
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body.dump(), "application/json");
  };
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  server.Post("/meshes", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, upload_mesh(req.body));
  });
  server.Post("/predict", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, predict(req.body));
  });
  server.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, health());
  });
  server.set_error_handler([reply](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const char* what = res.status == 413 ? "payload too large" : "not found";
    reply(res, {res.status, {{"error", what}}, {}});
  });
}

void Service::run() {
  httplib::Server server;
  install(server);
  if (!server.listen(config_.host, config_.port)) {
    throw std::runtime_error("cannot listen on " + config_.host + ":" + std::to_string(config_.port));
  }
}

}  // namespace ims
