#pragma once

#include "metasac/networks.hpp"

#include <filesystem>
#include <iosfwd>

namespace metasac::nn {

/// Text checkpoint format, version 1:
///
///   metasac-checkpoint 1
///   kind policy|critic
///   layout <key>=<value> ...
///   params <count>
///   <id> <rows> <cols>
///   <rows * cols values, column-major, %.17g>
///   ...
inline constexpr int kCheckpointVersion = 1;

void write_policy(std::ostream& os, const PolicyParams& policy);
void write_critic(std::ostream& os, const CriticParams& critic);
PolicyParams read_policy(std::istream& is);
CriticParams read_critic(std::istream& is);

void save_policy(const std::filesystem::path& path, const PolicyParams& policy);
PolicyParams load_policy(const std::filesystem::path& path);
void save_critic(const std::filesystem::path& path, const CriticParams& critic);
CriticParams load_critic(const std::filesystem::path& path);

}  // namespace metasac::nn
