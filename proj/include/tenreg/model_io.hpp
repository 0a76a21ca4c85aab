#pragma once

// JSON diagnostics sidecars written next to binary model files.

#include "tenreg/regression.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tenreg {

std::filesystem::path sidecar_path(const std::filesystem::path& model_path);

void write_sidecar(const std::filesystem::path& path, const FitDiagnostics& diag,
                   const std::vector<double>& penalties, std::optional<double> core_penalty,
                   const std::string& rank);

/// Fills diagnostics and penalties from the sidecar; a missing sidecar leaves
/// them untouched.
void read_sidecar(const std::filesystem::path& path, FitDiagnostics& diag,
                  std::vector<double>& penalties, double* core_penalty);

}  // namespace tenreg
