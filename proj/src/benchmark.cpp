#include "ims/pipeline.hpp"

#include <fstream>
#include <thread>

namespace ims {

MachineInfo machine_info() {
  MachineInfo info;
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) info.cpu = line.substr(colon + 2);
      break;
    }
  }
  if (info.cpu.empty()) info.cpu = "unknown";
  info.hardware_threads = std::thread::hardware_concurrency();
#if defined(__clang__)
  info.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  info.compiler = "gcc " __VERSION__;
#else
  info.compiler = "unknown";
#endif
  return info;
}

nlohmann::json BenchmarkRecord::to_json() const {
  return {{"stages",
           {{"preprocessing", timings.preprocessing},
            {"fill_time", timings.fill_time},
            {"deflection", timings.deflection}}},
          {"total", timings.total},
          {"vertex_count", vertex_count},
          {"machine",
           {{"cpu", machine.cpu},
            {"hardware_threads", machine.hardware_threads},
            {"compiler", machine.compiler}}}};
}

BenchmarkRecord benchmark(const FillTimeModel& fill_model, const cnn::DeflectionNet& net,
                          std::string_view mesh_text, const nlohmann::json& gates_doc,
                          std::uint64_t seed) {
  const auto result = predict_from_text(mesh_text, gates_doc, fill_model, &net, {true, true, seed});
  BenchmarkRecord rec;
  rec.timings = result.timings;
  rec.vertex_count = result.fill_time.size();
  rec.machine = machine_info();
  return rec;
}

}  // namespace ims
