#include "atk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "atk/error.hpp"
#include "atk/rng.hpp"
#include "serial.hpp"

namespace atk {

GaussianStats gaussian_stats(const std::vector<double>& rows, int64_t n, int dim) {
  if (n < 2) throw ConfigError("gaussian_stats: need at least two samples");
  if (dim < 1 || static_cast<int64_t>(rows.size()) != n * dim)
    throw ConfigError("gaussian_stats: row buffer does not match n x dim");
  GaussianStats st;
  st.dim = dim;
  st.count = n;
  st.mean.assign(dim, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) st.mean[j] += rows[i * dim + j];
  for (int j = 0; j < dim; ++j) st.mean[j] /= static_cast<double>(n);
  st.cov.assign(static_cast<size_t>(dim) * dim, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const double* r = rows.data() + i * dim;
    for (int a = 0; a < dim; ++a) {
      const double da = r[a] - st.mean[a];
      for (int b = a; b < dim; ++b) st.cov[a * dim + b] += da * (r[b] - st.mean[b]);
    }
  }
  const double norm = 1.0 / static_cast<double>(n - 1);
  for (int a = 0; a < dim; ++a)
    for (int b = a; b < dim; ++b) {
      const double v = st.cov[a * dim + b] * norm;
      st.cov[a * dim + b] = v;
      st.cov[b * dim + a] = v;
    }
  return st;
}

void eig_sym(const std::vector<double>& a, int dim, std::vector<double>& eigvals,
             std::vector<double>& eigvecs) {
  if (dim < 1 || static_cast<int64_t>(a.size()) != static_cast<int64_t>(dim) * dim)
    throw ConfigError("eig_sym: matrix buffer does not match dim");
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j)
      if (std::fabs(a[i * dim + j] - a[j * dim + i]) >
          1e-9 * (1.0 + std::fabs(a[i * dim + j])))
        throw ConfigError("eig_sym: matrix is not symmetric");

  std::vector<double> m = a;
  eigvecs.assign(static_cast<size_t>(dim) * dim, 0.0);
  for (int i = 0; i < dim; ++i) eigvecs[i * dim + i] = 1.0;

  double scale = 0.0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) scale = std::max(scale, std::fabs(m[i * dim + j]));
  if (scale == 0.0) scale = 1.0;

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < dim; ++i)
      for (int j = i + 1; j < dim; ++j) off += m[i * dim + j] * m[i * dim + j];
    if (std::sqrt(off) <= 1e-14 * scale * dim) break;
    for (int p = 0; p < dim - 1; ++p)
      for (int q = p + 1; q < dim; ++q) {
        const double apq = m[p * dim + q];
        if (std::fabs(apq) <= 1e-300) continue;
        const double app = m[p * dim + p], aqq = m[q * dim + q];
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < dim; ++k) {
          const double mkp = m[k * dim + p], mkq = m[k * dim + q];
          m[k * dim + p] = c * mkp - s * mkq;
          m[k * dim + q] = s * mkp + c * mkq;
        }
        for (int k = 0; k < dim; ++k) {
          const double mpk = m[p * dim + k], mqk = m[q * dim + k];
          m[p * dim + k] = c * mpk - s * mqk;
          m[q * dim + k] = s * mpk + c * mqk;
        }
        for (int k = 0; k < dim; ++k) {
          const double vkp = eigvecs[k * dim + p], vkq = eigvecs[k * dim + q];
          eigvecs[k * dim + p] = c * vkp - s * vkq;
          eigvecs[k * dim + q] = s * vkp + c * vkq;
        }
      }
  }
  eigvals.resize(dim);
  for (int i = 0; i < dim; ++i) eigvals[i] = m[i * dim + i];
}

namespace {

// C = A * B for dim x dim row-major matrices
std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b,
                              int dim) {
  std::vector<double> c(static_cast<size_t>(dim) * dim, 0.0);
  for (int i = 0; i < dim; ++i)
    for (int k = 0; k < dim; ++k) {
      const double av = a[i * dim + k];
      for (int j = 0; j < dim; ++j) c[i * dim + j] += av * b[k * dim + j];
    }
  return c;
}

// spectral square root of a PSD matrix; rejects eigenvalues below -1e-8 and
// clamps small negatives to zero
std::vector<double> sqrt_psd(const std::vector<double>& a, int dim, const char* what) {
  std::vector<double> w, v;
  eig_sym(a, dim, w, v);
  for (double& lam : w) {
    if (lam < -1e-8)
      throw Error(std::string(what) + ": matrix has eigenvalue " + std::to_string(lam) +
                  " below -1e-8, not positive semidefinite");
    lam = lam > 0.0 ? std::sqrt(lam) : 0.0;
  }
  // V diag(sqrt(w)) V^T
  std::vector<double> scaled(static_cast<size_t>(dim) * dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) scaled[i * dim + j] = v[i * dim + j] * w[j];
  std::vector<double> vt(static_cast<size_t>(dim) * dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) vt[i * dim + j] = v[j * dim + i];
  return matmul_sq(scaled, vt, dim);
}

}  // namespace

double fid_from_stats(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim != b.dim || a.dim < 1)
    throw ConfigError("fid: feature dims differ, " + std::to_string(a.dim) + " vs " +
                      std::to_string(b.dim));
  const int d = a.dim;
  double mu2 = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = a.mean[i] - b.mean[i];
    mu2 += diff * diff;
  }
  double tr_a = 0.0, tr_b = 0.0;
  for (int i = 0; i < d; ++i) {
    tr_a += a.cov[i * d + i];
    tr_b += b.cov[i * d + i];
  }
  // (Ca^1/2 Cb Ca^1/2)^1/2 through the symmetric reduction
  auto sa = sqrt_psd(a.cov, d, "fid covariance a");
  auto inner = matmul_sq(matmul_sq(sa, b.cov, d), sa, d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double v = 0.5 * (inner[i * d + j] + inner[j * d + i]);
      inner[i * d + j] = v;
      inner[j * d + i] = v;
    }
  std::vector<double> w, v;
  eig_sym(inner, d, w, v);
  double tr_sqrt = 0.0;
  for (double lam : w) {
    if (lam < -1e-8)
      throw Error("fid: cross-covariance eigenvalue " + std::to_string(lam) +
                  " below -1e-8, inputs are not valid covariances");
    tr_sqrt += lam > 0.0 ? std::sqrt(lam) : 0.0;
  }
  const double fid = mu2 + tr_a + tr_b - 2.0 * tr_sqrt;
  if (fid < -1e-6)
    throw Error("fid: result " + std::to_string(fid) + " is negative beyond tolerance");
  return std::max(fid, 0.0);
}

namespace {

std::vector<double> embed(const LabeledDataset& data, const Classifier& frozen) {
  const int fdim = frozen.desc.feature_dim();
  std::vector<double> rows(data.size() * fdim);
  const int64_t chunk = 256;
  for (int64_t begin = 0; begin < data.size(); begin += chunk) {
    const int64_t count = std::min(chunk, data.size() - begin);
    Tape tape;
    auto feat = frozen.features(tape, data.slice(begin, count));
    std::copy(feat->data.begin(), feat->data.end(), rows.begin() + begin * fdim);
  }
  return rows;
}

}  // namespace

double dataset_fid(const LabeledDataset& ref, const LabeledDataset& cand,
                   const Classifier& embedder) {
  ref.validate();
  cand.validate();
  for (const auto* ds : {&ref, &cand}) {
    if (ds->height != embedder.desc.height || ds->width != embedder.desc.width ||
        ds->channels != embedder.desc.channels)
      throw ConfigError("fid: dataset dims do not match the embedder");
    if (ds->size() < 2) throw ConfigError("fid: need at least two samples per side");
  }
  auto frozen = embedder.clone(false);
  const int fdim = frozen.desc.feature_dim();
  auto stats_a = gaussian_stats(embed(ref, frozen), ref.size(), fdim);
  auto stats_b = gaussian_stats(embed(cand, frozen), cand.size(), fdim);
  return fid_from_stats(stats_a, stats_b);
}

namespace {

struct ChunkEval {
  std::vector<uint8_t> clean_ok, pgd_ok, aa_ok;
  std::vector<int> pred;
};

std::vector<uint8_t> correct_on(const Classifier& frozen, const TensorPtr& pts,
                                const std::vector<uint16_t>& labels,
                                std::vector<int>* pred_out = nullptr) {
  Tape tape;
  auto logits = frozen.logits(tape, pts);
  const int k = logits->shape[1];
  std::vector<uint8_t> ok(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits->data.data() + i * k;
    int arg = 0;
    for (int j = 1; j < k; ++j)
      if (row[j] > row[arg]) arg = j;
    ok[i] = arg == labels[i];
    if (pred_out) (*pred_out)[i] = arg;
  }
  return ok;
}

void and_correct(const Classifier& frozen, const std::vector<TensorPtr>& candidates,
                 const std::vector<uint16_t>& labels, std::vector<uint8_t>& ok) {
  for (const auto& cand : candidates) {
    auto res = correct_on(frozen, cand, labels);
    for (size_t i = 0; i < ok.size(); ++i) ok[i] = ok[i] && res[i];
  }
}

ChunkEval eval_chunk(const Classifier& frozen, const TensorPtr& images,
                     const std::vector<uint16_t>& labels, const ThreatModel& tm, uint64_t seed,
                     bool with_aa) {
  ChunkEval out;
  out.pred.resize(labels.size());
  out.clean_ok = correct_on(frozen, images, labels, &out.pred);

  AttackConfig pgd40;
  pgd40.steps = 40;
  pgd40.step_size = tm.eps > 0.0 ? tm.eps / 8.0 : 1.0;
  pgd40.random_start = true;
  pgd40.restarts = 1;
  pgd40.loss = AttackLoss::ce;

  auto fn = [&frozen](Tape& t, const TensorPtr& in) { return frozen.logits(t, in); };

  out.pgd_ok = out.clean_ok;  // the clean point is always a candidate
  auto base = pgd_full(fn, images, labels, tm, pgd40, derive_seed(seed, 40));
  and_correct(frozen, base.candidates, labels, out.pgd_ok);

  if (with_aa) {
    out.aa_ok = out.pgd_ok;  // superset of the pgd40 candidates
    AttackConfig ce_extra = pgd40;
    ce_extra.restarts = 2;
    auto more = pgd_full(fn, images, labels, tm, ce_extra, derive_seed(seed, 41));
    and_correct(frozen, more.candidates, labels, out.aa_ok);
    AttackConfig kl_extra = pgd40;
    kl_extra.restarts = 2;
    kl_extra.loss = AttackLoss::kl_to_clean;
    auto kl = pgd_full(fn, images, labels, tm, kl_extra, derive_seed(seed, 42));
    and_correct(frozen, kl.candidates, labels, out.aa_ok);
  }
  return out;
}

}  // namespace

ValAccuracy pgd40_accuracy(const Classifier& model, const LabeledDataset& data,
                           const ThreatModel& tm, uint64_t seed) {
  data.validate();
  if (data.size() == 0) throw ConfigError("pgd40_accuracy: dataset is empty");
  auto frozen = model.clone(false);
  int64_t clean = 0, robust = 0;
  const int64_t chunk = 64;
  for (int64_t begin = 0; begin < data.size(); begin += chunk) {
    const int64_t count = std::min(chunk, data.size() - begin);
    auto part = eval_chunk(frozen, data.slice(begin, count), data.label_slice(begin, count),
                           tm, derive_seed(seed, static_cast<uint64_t>(begin)), false);
    for (auto v : part.clean_ok) clean += v;
    for (auto v : part.pgd_ok) robust += v;
  }
  return {static_cast<double>(clean) / data.size(), static_cast<double>(robust) / data.size()};
}

EvalReport evaluate(const Classifier& model, const LabeledDataset& data, const ThreatModel& tm,
                    uint64_t seed) {
  data.validate();
  if (data.size() == 0) throw ConfigError("evaluate: dataset is empty");
  if (data.num_classes != model.desc.num_classes)
    throw ConfigError("evaluate: dataset and model class counts differ");
  auto frozen = model.clone(false);
  EvalReport rep;
  rep.count = data.size();
  const int k = model.desc.num_classes;
  std::vector<int64_t> class_total(k, 0), class_clean(k, 0), class_robust(k, 0);
  int64_t clean = 0, pgd_ok = 0, aa_ok = 0;
  const int64_t chunk = 64;
  for (int64_t begin = 0; begin < data.size(); begin += chunk) {
    const int64_t count = std::min(chunk, data.size() - begin);
    auto labels = data.label_slice(begin, count);
    auto part = eval_chunk(frozen, data.slice(begin, count), labels, tm,
                           derive_seed(seed, static_cast<uint64_t>(begin)), true);
    for (int64_t i = 0; i < count; ++i) {
      class_total[labels[i]]++;
      class_clean[labels[i]] += part.clean_ok[i];
      class_robust[labels[i]] += part.pgd_ok[i];
      clean += part.clean_ok[i];
      pgd_ok += part.pgd_ok[i];
      aa_ok += part.aa_ok[i];
    }
  }
  rep.clean = static_cast<double>(clean) / rep.count;
  rep.pgd40 = static_cast<double>(pgd_ok) / rep.count;
  rep.aa_proxy = static_cast<double>(aa_ok) / rep.count;
  rep.per_class_clean.resize(k);
  rep.per_class_robust.resize(k);
  for (int c = 0; c < k; ++c) {
    rep.per_class_clean[c] =
        class_total[c] ? static_cast<double>(class_clean[c]) / class_total[c] : 0.0;
    rep.per_class_robust[c] =
        class_total[c] ? static_cast<double>(class_robust[c]) / class_total[c] : 0.0;
  }
  return rep;
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
  auto os = open_output(path);
  os << "count,clean,pgd40,aa_proxy";
  for (size_t c = 0; c < report.per_class_clean.size(); ++c)
    os << ",clean_class" << c << ",robust_class" << c;
  os << "\n";
  char buf[64];
  os << report.count;
  for (double v : {report.clean, report.pgd40, report.aa_proxy}) {
    std::snprintf(buf, sizeof(buf), ",%.6f", v);
    os << buf;
  }
  for (size_t c = 0; c < report.per_class_clean.size(); ++c) {
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", report.per_class_clean[c],
                  report.per_class_robust[c]);
    os << buf;
  }
  os << "\n";
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace atk
