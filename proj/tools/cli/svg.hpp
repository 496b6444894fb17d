#pragma once

#include "stmd/common.hpp"

#include <string>

namespace stmd::cli {

/// Scatter plot of the first two coordinates of `points` as a standalone SVG file.
void write_scatter_svg(const std::string& path, const Batch& points, const std::string& title);

}  // namespace stmd::cli
