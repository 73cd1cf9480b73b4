#pragma once

#include <filesystem>

#include <json.hpp>

#include "matl/trainer.hpp"

namespace matl {

inline constexpr const char* kCheckpointFormat = "matl-checkpoint/1";

// Networks, theta, prototype bank, superdomain assignment and config.
// History and op trace are not stored.
nlohmann::json checkpoint_to_json(const TrainedState& st);
TrainedState checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const TrainedState& st, const std::filesystem::path& path);
TrainedState load_checkpoint(const std::filesystem::path& path);

}  // namespace matl
