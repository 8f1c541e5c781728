#pragma once

#include "ims/pipeline.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace httplib {
class Server;
}

namespace ims {

/// One uploaded mesh with its graph and the geodesic rows computed so far.
class Session {
 public:
  explicit Session(Mesh mesh);

  const Mesh& mesh() const noexcept { return mesh_; }
  const MeshGraph& graph() const noexcept { return graph_; }
  /// Geodesic distances from `node`, computed once per node.
  std::vector<double> distances(VertexId node);
  std::size_t cached_rows() const;

 private:
  Mesh mesh_;
  MeshGraph graph_;
  mutable std::mutex mutex_;
  std::unordered_map<VertexId, std::shared_ptr<const std::vector<double>>> cache_;
};

/// Handle -> session map with least-recently-used eviction.
class SessionStore {
 public:
  explicit SessionStore(std::size_t capacity = 16);

  std::string add(Mesh mesh);
  /// Marks the handle as most recently used. Null when unknown or evicted.
  std::shared_ptr<Session> get(const std::string& handle);
  bool contains(const std::string& handle) const;
  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }
  /// Most recently used first.
  std::vector<std::string> handles() const;

 private:
  struct Entry {
    std::shared_ptr<Session> session;
    std::list<std::string>::iterator position;
  };
  std::size_t capacity_;
  std::uint64_t next_id_ = 1;
  mutable std::mutex mutex_;
  std::list<std::string> order_;  // front = most recent
  std::unordered_map<std::string, Entry> entries_;
};

struct ServiceConfig {
  std::filesystem::path fill_model;       // fill-time model JSON
  std::filesystem::path weights;          // deflection weight blob
  std::filesystem::path weights_manifest;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t session_capacity = 16;
  std::size_t max_upload_bytes = 64u << 20;
  std::uint64_t smoothing_seed = 0;
  std::string cors_origin = "*";
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
  std::vector<std::pair<std::string, std::string>> headers;
};

/// The prediction API. Models are loaded once in the constructor; a missing or
/// unreadable artifact leaves the service running in degraded mode.
class Service {
 public:
  explicit Service(ServiceConfig config);

  ServiceResponse upload_mesh(std::string_view body);
  ServiceResponse predict(const std::string& body);
  ServiceResponse health() const;

  /// Registers the routes (and CORS handling) on an httplib server.
  void install(httplib::Server& server);
  /// Blocks serving on config.host:config.port.
  void run();

  SessionStore& sessions() noexcept { return sessions_; }
  bool fill_model_loaded() const noexcept { return fill_model_.has_value(); }
  bool deflection_loaded() const noexcept { return net_.has_value(); }

 private:
  ServiceConfig config_;
  SessionStore sessions_;
  std::optional<FillTimeModel> fill_model_;
  std::optional<cnn::DeflectionNet> net_;
  std::string fill_version_, deflection_version_;
  std::vector<std::string> problems_;
  std::chrono::steady_clock::time_point started_;
};

/// FNV-1a 64 of a file's bytes, as 16 hex digits; empty if unreadable.
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace ims
