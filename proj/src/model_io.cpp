#include "tenreg/model_io.hpp"

#include "tenreg/errors.hpp"

#include <json.hpp>

#include <fstream>

namespace tenreg {

std::filesystem::path sidecar_path(const std::filesystem::path& model_path) {
  return std::filesystem::path(model_path.string() + ".json");
}

void write_sidecar(const std::filesystem::path& path, const FitDiagnostics& diag,
                   const std::vector<double>& penalties, std::optional<double> core_penalty,
                   const std::string& rank) {
  nlohmann::ordered_json j;
  j["rank"] = rank;
  j["loglik"] = diag.loglik;
  j["bic"] = diag.bic;
  j["iterations"] = diag.sweeps;
  j["converged"] = diag.converged;
  j["restart"] = diag.restart;
  j["seed"] = diag.seed;
  j["penalties"] = penalties;
  if (core_penalty) j["core_penalty"] = *core_penalty;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void read_sidecar(const std::filesystem::path& path, FitDiagnostics& diag,
                  std::vector<double>& penalties, double* core_penalty) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return;
  try {
    const auto j = nlohmann::json::parse(is);
    diag.loglik = j.at("loglik").get<double>();
    diag.bic = j.at("bic").get<double>();
    diag.sweeps = j.at("iterations").get<int>();
    diag.converged = j.at("converged").get<bool>();
    diag.restart = j.at("restart").get<int>();
    diag.seed = j.at("seed").get<std::uint64_t>();
    auto p = j.at("penalties").get<std::vector<double>>();
    if (p.size() != penalties.size()) throw FormatError("sidecar penalty count mismatch");
    penalties = std::move(p);
    if (core_penalty && j.contains("core_penalty")) *core_penalty = j.at("core_penalty").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace tenreg
