#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "opendg/meta.hpp"

namespace opendg {

struct GradCheckEntry {
  std::string name;  // e.g. "train/extractor/layer0/weight"
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;

  bool passed(double tol = 1e-4) const { return worst < tol; }
};

// Test hook: mutates the analytic gradients before comparison, used to
// verify the checker detects wrong gradients.
using GradMutator = std::function<void(ModelGradients&)>;

// Compares analytic gradients of the meta-training loss (all three terms)
// and the meta-objective loss against central finite differences (step
// 1e-5) on a randomized tiny bank, replaying the augmentation draws per
// evaluation. Reports the max relative error per layer tensor.
GradCheckReport run_gradient_checks(std::uint64_t seed,
                                    const GradMutator& mutator = nullptr);

// Central finite differences on a single parameter container, reused by
// module tests: perturbs every parameter of bank.models[s] and compares
// against `analytic` for the scalar loss `eval_loss()`.
struct FdComparison {
  double max_rel_err = 0.0;
  std::string worst_name;
};

FdComparison compare_against_fd(ModelBank& bank, std::size_t s,
                                const ModelGradients& analytic,
                                const std::function<double()>& eval_loss,
                                double step = 1e-5);

}  // namespace opendg
