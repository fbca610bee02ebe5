#pragma once

#include <string>
#include <vector>

#include "dissipic/common.hpp"

namespace dissipic::detail {

struct Layout {
  std::vector<Eigen::Index> heights, widths;
};

template <class T>
Layout block_layout(const std::vector<std::vector<T>>& blocks) {
  Layout out;
  if (blocks.empty()) return out;
  const std::size_t ncols = blocks.front().size();
  for (const auto& row : blocks) {
    require(row.size() == ncols, ErrorCode::DimensionMismatch, "ragged block matrix");
    out.heights.push_back(row.front().rows());
  }
  for (const auto& b : blocks.front()) out.widths.push_back(b.cols());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (std::size_t j = 0; j < ncols; ++j) {
      const auto& b = blocks[i][j];
      if (b.rows() != out.heights[i] || b.cols() != out.widths[j]) {
        throw Error(ErrorCode::DimensionMismatch,
                    "block (" + std::to_string(i) + "," + std::to_string(j) + ") is " +
                        std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ", expected " +
                        std::to_string(out.heights[i]) + "x" + std::to_string(out.widths[j]));
      }
    }
  }
  return out;
}

}  // namespace dissipic::detail
