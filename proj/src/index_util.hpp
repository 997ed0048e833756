#pragma once

#include <vector>

#include "cmilab/qmat.hpp"

namespace cmilab::detail {

// Flat basis index = rest_offsets[r] + target_offsets[t]; targets enumerate in
// the order given, the rest in layout order.
struct SplitIndex {
  std::vector<std::size_t> target_offsets;
  std::vector<std::size_t> rest_offsets;
};

SplitIndex split_index(const SystemLayout& layout, const Labels& targets);

}  // namespace cmilab::detail
