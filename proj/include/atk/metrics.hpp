#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atk/attack.hpp"
#include "atk/data.hpp"
#include "atk/model.hpp"

namespace atk {

struct GaussianStats {
  int dim = 0;
  int64_t count = 0;
  std::vector<double> mean;  // [dim]
  std::vector<double> cov;   // [dim,dim] symmetric, unbiased
};

// rows: n x dim feature matrix
GaussianStats gaussian_stats(const std::vector<double>& rows, int64_t n, int dim);

// cyclic Jacobi eigendecomposition of a symmetric matrix;
// eigvecs holds eigenvectors as columns, a = V diag(w) V^T
void eig_sym(const std::vector<double>& a, int dim, std::vector<double>& eigvals,
             std::vector<double>& eigvecs);

// |mu_a - mu_b|^2 + tr(Ca + Cb - 2 (Ca^1/2 Cb Ca^1/2)^1/2)
double fid_from_stats(const GaussianStats& a, const GaussianStats& b);

// features come from the embedder's penultimate layer
double dataset_fid(const LabeledDataset& ref, const LabeledDataset& cand,
                   const Classifier& embedder);

struct ValAccuracy {
  double clean = 0.0;
  double robust = 0.0;
};

// clean accuracy plus PGD-40 robust accuracy (step size eps/8, random start,
// candidates include the clean point, so robust <= clean holds exactly)
ValAccuracy pgd40_accuracy(const Classifier& model, const LabeledDataset& data,
                           const ThreatModel& tm, uint64_t seed);

struct EvalReport {
  int64_t count = 0;
  double clean = 0.0;
  double pgd40 = 0.0;
  double aa_proxy = 0.0;
  std::vector<double> per_class_clean;
  std::vector<double> per_class_robust;  // under pgd40
};

// Full protocol: clean accuracy, PGD-40, and a stronger multi-restart
// multi-loss PGD-40 whose candidate set contains the PGD-40 one, giving
// aa_proxy <= pgd40 <= clean by construction.
EvalReport evaluate(const Classifier& model, const LabeledDataset& data, const ThreatModel& tm,
                    uint64_t seed);

void write_eval_csv(const EvalReport& report, const std::string& path);

}  // namespace atk
