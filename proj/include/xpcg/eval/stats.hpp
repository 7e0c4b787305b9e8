#pragma once

#include <span>
#include <vector>

namespace xpcg::eval {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for n < 2
};

MeanStd mean_std(std::span<const double> values);

/// Fraction of positions where `predicted` equals `truth`.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Count of features whose 0.5-binarized prediction disagrees with the
/// binary truth, in [0, 1920]. Throws ShapeMismatch.
int structure_error(std::span<const float> predicted, std::span<const float> truth);

}  // namespace xpcg::eval
