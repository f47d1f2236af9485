#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "hanam/latent_approx.hpp"

namespace hanam {

/// Shortest text that parses back to the same double.
std::string format_number(double x);

/// Draws file: header line `n,D,K`, then K blocks of n rows with D comma-separated values.
std::string write_draws_string(const LatentDraws& draws);
LatentDraws parse_draws(std::string_view text, const std::string& source_name = "<draws>");

LatentDraws read_draws(const std::filesystem::path& path);
void write_draws(const std::filesystem::path& path, const LatentDraws& draws);

/// Writes to a sibling temporary file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace hanam
