#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace fpath {

/// Names accepted by run_stage, in pipeline order.
const std::vector<std::string>& stage_names();

/// Default config object for a stage. Request configs are merged over it, so a
/// request only needs the keys it changes.
nlohmann::json stage_default_config(const std::string& command);

/// Executes one pipeline stage.
///
/// request: {"command": name,
///           "inputs":  {role: path, ...},
///           "outputs": {role: path, ...},   optional per role
///           "config":  {...}}               merged over the defaults
///
/// Returns the stage manifest: format, version, command, inputs,
/// input_digests, outputs, resolved config, metrics and runtime_seconds.
/// Metrics include a digest of every artifact the stage produces, whether or
/// not it was written, so a rerun can be checked without touching disk. With
/// write_outputs false nothing is written.
nlohmann::json run_stage(const nlohmann::json& request, bool write_outputs = true);

}  // namespace fpath
