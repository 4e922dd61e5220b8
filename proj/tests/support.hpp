#pragma once

#include <memory>
#include <string>

#include "kkl/kklmap.hpp"

namespace kkl::testing {

// The three observers of the Duffing benchmark.
FilterBank fast_bank();
FilterBank slow_bank();
FilterBank nonlinear_bank_tanh();

// Measured invariant box of [-2, 2]^2 under the Duffing flow, inflated 5%.
const Box& duffing_box();

// Cached 50x50 datasets over duffing_box(); name is fast, slow or nonlinear.
std::shared_ptr<const KklDataset> small_dataset(const std::string& name);

std::string temp_path(const std::string& leaf);

}  // namespace kkl::testing
