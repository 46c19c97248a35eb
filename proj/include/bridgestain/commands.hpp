#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace bridgestain {

/// Command names accepted by run_command, in display order.
const std::vector<std::string>& command_names();

/// Runs one orchestration command. `config_json` is a JSON object of
/// command parameters; unknown keys are an invalid-config error. Every
/// command writes resolved_config.json into its output directory and returns
/// a JSON summary.
std::string run_command(std::string_view name, std::string_view config_json);

}  // namespace bridgestain
