#include "atk/attack.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "atk/error.hpp"
#include "atk/rng.hpp"

namespace atk {

void ThreatModel::validate() const {
  if (!(eps >= 0.0)) throw ConfigError("threat model: eps must be nonnegative");
}

void AttackConfig::validate() const {
  if (steps < 1) throw ConfigError("attack: steps must be at least 1");
  if (!(step_size > 0.0)) throw ConfigError("attack: step_size must be positive");
  if (restarts < 1) throw ConfigError("attack: restarts must be at least 1");
}

TensorPtr project(const TensorPtr& x, const TensorPtr& center, const ThreatModel& tm) {
  tm.validate();
  if (x->shape != center->shape)
    throw ConfigError("project: shape mismatch " + shape_str(x->shape) + " vs " +
                      shape_str(center->shape));
  auto out = make_tensor(x->shape);
  const int64_t n = x->numel();
  if (tm.norm == Norm::linf) {
    for (int64_t i = 0; i < n; ++i) {
      double v = x->data[i];
      const double c = center->data[i];
      v = std::min(std::max(v, c - tm.eps), c + tm.eps);
      out->data[i] = std::min(std::max(v, 0.0), 1.0);
    }
    return out;
  }
  const int64_t b = x->shape[0];
  const int64_t d = n / b;
  for (int64_t s = 0; s < b; ++s) {
    const double* xs = x->data.data() + s * d;
    const double* cs = center->data.data() + s * d;
    double* os = out->data.data() + s * d;
    double norm2 = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      const double diff = xs[i] - cs[i];
      norm2 += diff * diff;
    }
    const double norm = std::sqrt(norm2);
    const double scalef = norm > tm.eps && norm > 0.0 ? tm.eps / norm : 1.0;
    for (int64_t i = 0; i < d; ++i) {
      const double v = cs[i] + scalef * (xs[i] - cs[i]);
      os[i] = std::min(std::max(v, 0.0), 1.0);
    }
  }
  return out;
}

namespace {

struct RowView {
  const double* p;
  int k;
};

// plain (unsmoothed) cross-entropy of one row
double row_ce(RowView logits, int label) {
  double m = logits.p[0];
  for (int j = 1; j < logits.k; ++j) m = std::max(m, logits.p[j]);
  double s = 0.0;
  for (int j = 0; j < logits.k; ++j) s += std::exp(logits.p[j] - m);
  return m + std::log(s) - logits.p[label];
}

// KL(softmax(clean) || softmax(adv)) of one row
double row_kl(RowView clean, RowView adv) {
  const int k = clean.k;
  double mc = clean.p[0], ma = adv.p[0];
  for (int j = 1; j < k; ++j) {
    mc = std::max(mc, clean.p[j]);
    ma = std::max(ma, adv.p[j]);
  }
  double sc = 0.0, sa = 0.0;
  for (int j = 0; j < k; ++j) {
    sc += std::exp(clean.p[j] - mc);
    sa += std::exp(adv.p[j] - ma);
  }
  const double lc = mc + std::log(sc), la = ma + std::log(sa);
  double kl = 0.0;
  for (int j = 0; j < k; ++j) {
    const double lp = clean.p[j] - lc;
    const double lq = adv.p[j] - la;
    kl += std::exp(lp) * (lp - lq);
  }
  return kl;
}

}  // namespace

PgdResult pgd_full(const ModelFn& f, const TensorPtr& x, const std::vector<uint16_t>& y,
                   const ThreatModel& tm, const AttackConfig& cfg, uint64_t seed,
                   const PgdObserver* observer) {
  tm.validate();
  cfg.validate();
  const int64_t bsz = x->shape[0];
  const int64_t d = x->numel() / bsz;
  if (static_cast<int64_t>(y.size()) != bsz)
    throw ConfigError("pgd: got " + std::to_string(y.size()) + " labels for a batch of " +
                      std::to_string(bsz));

  // clean logits drive the kl_to_clean loss; computed once per call
  std::vector<double> clean_logits;
  int num_classes = 0;
  {
    Tape tape;
    auto frozen_in = make_tensor(x->shape);
    frozen_in->data = x->data;
    auto lg = f(tape, frozen_in);
    if (lg->shape.size() != 2 || lg->shape[0] != bsz)
      throw ConfigError("pgd: model returned logits of shape " + shape_str(lg->shape));
    num_classes = lg->shape[1];
    clean_logits = lg->data;
  }
  for (uint16_t label : y)
    if (label >= num_classes)
      throw ConfigError("pgd: label " + std::to_string(label) + " out of range for " +
                        std::to_string(num_classes) + " classes");

  auto sample_loss = [&](const double* logits, int64_t s) {
    if (cfg.loss == AttackLoss::ce)
      return row_ce({logits + s * num_classes, num_classes}, y[s]);
    return row_kl({clean_logits.data() + s * num_classes, num_classes},
                  {logits + s * num_classes, num_classes});
  };

  PgdResult result;
  result.best = make_tensor(x->shape);
  std::vector<double> best_loss(bsz, -std::numeric_limits<double>::infinity());

  auto consider = [&](const TensorPtr& cand, const std::vector<double>& losses) {
    for (int64_t s = 0; s < bsz; ++s) {
      if (losses[s] > best_loss[s]) {
        best_loss[s] = losses[s];
        std::copy(cand->data.begin() + s * d, cand->data.begin() + (s + 1) * d,
                  result.best->data.begin() + s * d);
      }
    }
  };

  auto score = [&](const TensorPtr& cand) {
    Tape tape;
    auto in = make_tensor(cand->shape);
    in->data = cand->data;
    auto lg = f(tape, in);
    std::vector<double> losses(bsz);
    for (int64_t s = 0; s < bsz; ++s) losses[s] = sample_loss(lg->data.data(), s);
    return losses;
  };

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    auto iter = make_tensor(x->shape);
    iter->data = x->data;
    if (cfg.random_start && tm.eps > 0.0) {
      for (int64_t s = 0; s < bsz; ++s) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(restart), static_cast<uint64_t>(s)));
        double* row = iter->data.data() + s * d;
        if (tm.norm == Norm::linf) {
          for (int64_t i = 0; i < d; ++i) row[i] += rng.uniform(-tm.eps, tm.eps);
        } else {
          std::vector<double> dir(d);
          double norm2 = 0.0;
          for (int64_t i = 0; i < d; ++i) {
            dir[i] = rng.next_normal();
            norm2 += dir[i] * dir[i];
          }
          const double norm = std::sqrt(norm2);
          const double radius =
              tm.eps * std::pow(rng.next_double(), 1.0 / static_cast<double>(d));
          if (norm > 0.0)
            for (int64_t i = 0; i < d; ++i) row[i] += radius * dir[i] / norm;
        }
      }
      iter = project(iter, x, tm);
    }
    result.candidates.push_back(iter);

    std::vector<double> raw_step(x->data.size());
    for (int k = 1; k <= cfg.steps; ++k) {
      Tape tape;
      auto leaf = make_tensor(x->shape, 0.0, true);
      leaf->data = iter->data;
      auto lg = f(tape, leaf);
      if (k == 1) consider(iter, [&] {  // start point scored off this forward
            std::vector<double> losses(bsz);
            for (int64_t s = 0; s < bsz; ++s) losses[s] = sample_loss(lg->data.data(), s);
            return losses;
          }());
      TensorPtr loss;
      {
        const int bn = static_cast<int>(bsz), kn = num_classes;
        if (cfg.loss == AttackLoss::ce) {
          auto onehot = make_tensor({bn, kn});
          for (int64_t s = 0; s < bsz; ++s) onehot->data[s * kn + y[s]] = 1.0;
          loss = tape.scale(tape.sum(tape.mul(onehot, tape.log_softmax(lg))), -1.0);
        } else {
          auto pc = make_tensor({bn, kn});
          auto lpc = make_tensor({bn, kn});
          for (int64_t s = 0; s < bsz; ++s) {
            const double* row = clean_logits.data() + s * kn;
            double m = row[0];
            for (int j = 1; j < kn; ++j) m = std::max(m, row[j]);
            double sum = 0.0;
            for (int j = 0; j < kn; ++j) sum += std::exp(row[j] - m);
            const double lse = m + std::log(sum);
            for (int j = 0; j < kn; ++j) {
              lpc->data[s * kn + j] = row[j] - lse;
              pc->data[s * kn + j] = std::exp(row[j] - lse);
            }
          }
          loss = tape.sum(tape.mul(pc, tape.sub(lpc, tape.log_softmax(lg))));
        }
      }
      leaf->ensure_zero_grad();
      if (loss->requires_grad) tape.backward(loss);
      const auto& g = leaf->grad;

      if (tm.norm == Norm::linf) {
        const double a = cfg.step_size;
        for (size_t i = 0; i < raw_step.size(); ++i)
          raw_step[i] = g[i] > 0.0 ? a : (g[i] < 0.0 ? -a : 0.0);
      } else {
        for (int64_t s = 0; s < bsz; ++s) {
          double norm2 = 0.0;
          const double* gs = g.data() + s * d;
          for (int64_t i = 0; i < d; ++i) norm2 += gs[i] * gs[i];
          const double norm = std::sqrt(norm2);
          double* rs = raw_step.data() + s * d;
          if (norm > 0.0)
            for (int64_t i = 0; i < d; ++i) rs[i] = cfg.step_size * gs[i] / norm;
          else
            std::fill(rs, rs + d, 0.0);
        }
      }
      auto moved = make_tensor(x->shape);
      for (size_t i = 0; i < raw_step.size(); ++i) moved->data[i] = iter->data[i] + raw_step[i];
      iter = project(moved, x, tm);
      if (observer && observer->on_step) observer->on_step(k, raw_step, *iter);
    }
    result.candidates.push_back(iter);
    consider(iter, score(iter));
  }
  return result;
}

TensorPtr pgd(const ModelFn& f, const TensorPtr& x, const std::vector<uint16_t>& y,
              const ThreatModel& tm, const AttackConfig& cfg, uint64_t seed) {
  return pgd_full(f, x, y, tm, cfg, seed).best;
}

}  // namespace atk
