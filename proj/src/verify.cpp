#include "mcdc/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "mcdc/attention.hpp"
#include "mcdc/baselines.hpp"
#include "mcdc/data.hpp"
#include "mcdc/evaluation.hpp"
#include "mcdc/model.hpp"
#include "mcdc/oracles.hpp"
#include "mcdc/random.hpp"
#include "mcdc/training.hpp"

namespace mcdc::verify {

namespace {

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <typename Fn>
CheckResult timed(std::string name, Fn&& body) {
  CheckResult r;
  r.name = std::move(name);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Cross-entropy of a classifier on one window as a function of its params.
ad::ScalarFn loss_fn(const Classifier& model, const Tensor& window, std::size_t label) {
  return [&model, window, label](ad::Tape& t, std::span<const ad::Var> p) {
    const ad::Var logits = model.logits(t, p, window);
    return ad::cross_entropy(t, ad::softmax(t, logits, ad::Axis::Row), label);
  };
}

McdcHyper tiny_hyper(attention::Kind kind) {
  McdcHyper h;
  h.temporal = 8;
  h.heads = 2;
  h.temporal_kernel = 3;
  h.channel_kernel = 4;
  h.ffn_hidden = 6;
  h.attention = kind;
  return h;
}

}  // namespace

CheckResult check_gradients(const VerifyOptions& options) {
  return timed("gradient check (mcdc, mcdc-matrix, ann)", [&](CheckResult& r) {
    Rng rng(derive_seed(options.seed, 1));
    std::vector<std::unique_ptr<Classifier>> models;
    models.push_back(std::make_unique<McdcModel>(tiny_hyper(attention::Kind::Conv), options.seed));
    models.push_back(
        std::make_unique<McdcModel>(mcdc_matrix_variant(tiny_hyper(attention::Kind::Conv), options.seed)));
    AnnHyper ann;
    ann.temporal = 8;
    ann.hidden1 = 6;
    ann.hidden2 = 5;
    models.push_back(std::make_unique<AnnModel>(ann, options.seed));
    ann.input = AnnInput::Window;
    models.push_back(std::make_unique<AnnModel>(ann, options.seed));

    double worst = 0.0;
    std::ostringstream detail;
    for (std::size_t m = 0; m < models.size(); ++m) {
      const Classifier& model = *models[m];
      for (std::size_t trial = 0; trial < 2; ++trial) {
        const Tensor x = random_tensor(kNumGases, model.temporal(), rng);
        const std::size_t label = rng.index(model.classes());
        std::function<void(std::vector<Tensor>&)> fault;
        if (options.inject_kernel_fault && m == 0) {
          fault = [](std::vector<Tensor>& g) { g[0][0] = g[0][0] * 1.01 + 1e-3; };
        }
        const auto res = ad::grad_check(loss_fn(model, x, label), model.params().tensors(),
                                        kGradStep, fault);
        if (res.max_rel_error > worst) {
          worst = res.max_rel_error;
          detail.str("");
          detail << model.kind() << " '" << model.params().name(res.worst_param) << "'["
                 << res.worst_index << "]";
        }
      }
    }
    r.passed = worst < kGradTolerance;
    r.detail = fmt("max relative error %.3e", worst) + " at " + detail.str();
  });
}

CheckResult check_attention_stochastic(const VerifyOptions& options, std::size_t inputs) {
  return timed("attention maps are column-stochastic", [&](CheckResult& r) {
    Rng rng(derive_seed(options.seed, 2));
    double worst_sum = 0.0;
    bool in_range = true;
    auto inspect = [&](const Tensor& map) {
      for (std::size_t c = 0; c < map.cols(); ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < map.rows(); ++i) {
          s += map(i, c);
          if (!(map(i, c) >= 0.0 && map(i, c) <= 1.0)) in_range = false;
        }
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
    };
    const std::size_t t_len = 12;
    for (std::size_t n = 0; n < inputs; ++n) {
      const double scale = n % 10 == 0 ? 30.0 : 1.0;  // some saturating inputs
      const Tensor x = random_tensor(kNumGases, t_len, rng, scale);
      const Tensor xt = x.transposed();
      // Temporal route tokens are days (5-dim features), channel route tokens are gases.
      for (const Tensor* in : {&x, &xt}) {
        const auto conv = attention::CnnAttentionHead::init(1 + rng.index(6), rng);
        const auto mat = attention::MatrixAttentionHead::init(in->rows(), rng);
        ad::Tape t;
        const ad::Var input = t.constant(*in);
        const auto cq = attention::cnn_qkv(
            t, input, {t.constant(conv.kernel_q), t.constant(conv.kernel_k), t.constant(conv.kernel_v)});
        inspect(t.value(attention::attention_map(t, cq.q, cq.k)));
        const auto mq = attention::matrix_qkv(
            t, input, {t.constant(mat.w_q), t.constant(mat.w_k), t.constant(mat.w_v)});
        inspect(t.value(attention::attention_map(t, mq.q, mq.k)));
      }
    }
    r.passed = in_range && worst_sum <= 1e-9;
    r.detail = fmt("max |column sum - 1| = %.3e", worst_sum) +
               (in_range ? "" : ", entry outside [0,1]") + " over " + std::to_string(inputs) +
               " inputs per route";
  });
}

CheckResult check_forward_contract(const VerifyOptions& options) {
  return timed("forward contract and uniform zero model", [&](CheckResult& r) {
    Rng rng(derive_seed(options.seed, 3));
    double worst_sum = 0.0, worst_uniform = 0.0;
    bool ok = true;
    for (std::size_t t : {8u, 12u}) {
      McdcHyper h;
      h.temporal = t;
      AnnHyper a;
      a.temporal = t;
      std::vector<std::unique_ptr<Classifier>> live, zero;
      live.push_back(std::make_unique<McdcModel>(h, options.seed));
      live.push_back(std::make_unique<McdcModel>(mcdc_matrix_variant(h, options.seed)));
      live.push_back(std::make_unique<AnnModel>(a, options.seed));
      zero.push_back(std::make_unique<McdcModel>(McdcModel::zeros(h)));
      h.attention = attention::Kind::Matrix;
      zero.push_back(std::make_unique<McdcModel>(McdcModel::zeros(h)));
      zero.push_back(std::make_unique<AnnModel>(AnnModel::zeros(a)));
      for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = random_tensor(kNumGases, t, rng, trial % 4 == 0 ? 10.0 : 1.0);
        for (const auto& m : live) {
          const Tensor p = forward(*m, x);
          if (p.rows() != 1 || p.cols() != kNumConditions) ok = false;
          double s = 0.0;
          for (double v : p.values()) {
            if (!(v >= 0.0)) ok = false;
            s += v;
          }
          worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
        for (const auto& m : zero) {
          const Tensor p = forward(*m, x);
          for (double v : p.values())
            worst_uniform = std::max(worst_uniform, std::abs(v - 1.0 / kNumConditions));
        }
      }
    }
    r.passed = ok && worst_sum <= 1e-9 && worst_uniform <= 1e-12;
    r.detail = fmt("max |sum - 1| = %.3e", worst_sum) +
               fmt(", max |p - 1/7| (zero params) = %.3e", worst_uniform) +
               (ok ? "" : ", bad shape or negative probability");
  });
}

CheckResult check_conv_oracle(const VerifyOptions& options, std::size_t geometries) {
  return timed("conv1d equals naive loops", [&](CheckResult& r) {
    Rng rng(derive_seed(options.seed, 4));
    std::size_t mismatches = 0, tested = 0;
    while (tested < geometries) {
      const std::size_t rows = 1 + rng.index(4), len = 1 + rng.index(20), k = 1 + rng.index(8);
      const std::size_t stride = 1 + rng.index(3), pl = rng.index(4), pr = rng.index(4);
      if (len + pl + pr < k) continue;
      const Tensor x = random_tensor(rows, len, rng);
      const Tensor kern = random_tensor(1, k, rng);
      const Tensor fast = ad::conv1d(x, kern.values(), stride, pl, pr);
      const Tensor slow = oracle::conv1d(x, kern.values(), stride, pl, pr);
      if (!(fast == slow)) ++mismatches;
      ++tested;
    }
    r.passed = mismatches == 0;
    r.detail = std::to_string(mismatches) + " of " + std::to_string(tested) +
               " geometries differ (exact comparison)";
  });
}

CheckResult check_wilcoxon_oracle(const VerifyOptions& options, std::size_t max_n) {
  return timed("exact rank-sum p equals enumeration", [&](CheckResult& r) {
    Rng rng(derive_seed(options.seed, 5));
    double worst = 0.0;
    std::size_t cases = 0;
    for (std::size_t n1 = 1; n1 <= max_n; ++n1) {
      for (std::size_t n2 = 1; n2 <= max_n; ++n2) {
        // Coarse values force ties on most draws.
        std::vector<double> a(n1), b(n2);
        for (auto& v : a) v = static_cast<double>(rng.index(6));
        for (auto& v : b) v = static_cast<double>(rng.index(6)) + (rng.uniform() < 0.5 ? 1.0 : 0.0);
        const auto fast = eval::wilcoxon_exact(a, b);
        const double slow = oracle::rank_sum_p_enumerate(a, b);
        const double w = oracle::rank_sum_enumerate_statistic(a, b);
        worst = std::max({worst, std::abs(fast.p_value - slow), std::abs(fast.rank_sum - w)});
        ++cases;
      }
    }
    r.passed = worst <= 1e-12;
    r.detail = fmt("max |p_dp - p_enum| = %.3e", worst) + " over " + std::to_string(cases) +
               " (n1, n2) pairs";
  });
}

CheckResult check_auc_oracle(const VerifyOptions& options, std::size_t sets) {
  return timed("trapezoid AUC equals Mann-Whitney", [&](CheckResult& r) {
    Rng rng(derive_seed(options.seed, 6));
    double worst = 0.0;
    for (std::size_t s = 0; s < sets; ++s) {
      const std::size_t n = 2 + rng.index(60);
      std::vector<double> scores(n);
      std::vector<char> pos(n);
      const bool coarse = s % 2 == 0;
      for (std::size_t i = 0; i < n; ++i) {
        pos[i] = rng.uniform() < 0.4;
        scores[i] = coarse ? static_cast<double>(rng.index(5)) / 4.0 : rng.uniform();
      }
      pos[0] = 1;
      pos[1] = 0;
      const auto curve = eval::roc_curve(scores, pos);
      worst = std::max(worst, std::abs(*curve.auc - oracle::mann_whitney_auc(scores, pos)));
    }
    r.passed = worst <= 1e-9;
    r.detail = fmt("max |AUC_trap - AUC_mw| = %.3e", worst) + " over " + std::to_string(sets) +
               " score sets";
  });
}

CheckResult check_pipeline_laws(const VerifyOptions& options) {
  return timed("pipeline laws", [&](CheckResult& r) {
    data::SynthRecipe recipe = data::default_recipe();
    recipe.min_length = 5;
    recipe.max_length = 30;
    recipe.gap_probability = 0.2;
    const auto series = data::synth_generate(recipe, options.seed);
    std::vector<std::string> failures;

    std::vector<data::GasSeries> filled;
    for (const auto& s : series) {
      filled.push_back(data::interpolate_gaps(s));
      if (!(data::interpolate_gaps(filled.back()) == filled.back()))
        failures.push_back("interpolation not idempotent for " + s.transformer_id);
    }
    for (std::size_t t : {4u, 8u, 12u}) {
      std::size_t expected = 0;
      for (const auto& s : filled) expected += s.length() >= t ? s.length() - t + 1 : 0;
      std::size_t got = 0;
      for (const auto& s : filled) {
        if (s.length() < t) continue;  // overlapping_sample would log the skip
        got += data::overlapping_sample(s, t).size();
      }
      if (got != expected) failures.push_back("window count mismatch at T=" + std::to_string(t));
    }
    std::vector<data::CdgdWindow> windows;
    for (const auto& s : filled) {
      if (s.length() < 8) continue;
      auto w = data::overlapping_sample(s, 8);
      windows.insert(windows.end(), w.begin(), w.end());
    }
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto plan = data::split(windows, data::SplitMode::FacilityWise, 0.2, seed);
      std::set<std::string> train_ids, test_ids;
      for (std::size_t i : plan.train) train_ids.insert(windows[i].transformer_id);
      for (std::size_t i : plan.test) test_ids.insert(windows[i].transformer_id);
      for (const auto& id : test_ids)
        if (train_ids.count(id)) failures.push_back("transformer " + id + " on both sides");
      if (plan.train.size() + plan.test.size() != windows.size())
        failures.push_back("split does not partition the windows");
    }
    const auto stats = data::fit_normalizer(windows);
    double worst = 0.0;
    for (const auto& w : windows) {
      const Tensor back = data::denormalize(data::normalize(w.x, stats), stats);
      for (std::size_t i = 0; i < back.size(); ++i)
        worst = std::max(worst, std::abs(back[i] - w.x[i]) / std::max(1.0, std::abs(w.x[i])));
    }
    if (worst > 1e-9) failures.push_back(fmt("normalisation round trip error %.3e", worst));
    r.passed = failures.empty();
    r.detail = failures.empty() ? fmt("normalisation round trip max error %.3e", worst) +
                                      ", 20 facility splits disjoint"
                                : failures.front();
  });
}

CheckResult check_determinism(const VerifyOptions& options) {
  return timed("training is deterministic", [&](CheckResult& r) {
    data::SynthRecipe recipe = data::default_recipe();
    for (auto& c : recipe.classes) c.transformers = 2;
    recipe.min_length = 12;
    recipe.max_length = 16;
    const auto series = data::synth_generate(recipe, options.seed);
    std::vector<data::CdgdWindow> windows;
    for (const auto& s : series) {
      auto w = data::overlapping_sample(data::interpolate_gaps(s), 8);
      windows.insert(windows.end(), w.begin(), w.end());
    }
    const auto stats = data::fit_normalizer(windows);
    const auto normed = data::normalize(windows, stats);
    McdcHyper h = tiny_hyper(attention::Kind::Conv);
    const McdcModel init(h, options.seed);
    training::TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 16;
    tc.seed = options.seed;
    tc.threads = 1;
    const auto a = training::train_fold(init, normed, {}, tc);
    const auto b = training::train_fold(init, normed, {}, tc);
    tc.threads = std::max<std::size_t>(2, options.threads);
    const auto c = training::train_fold(init, normed, {}, tc);
    const bool same_ab = a.model->params() == b.model->params();
    const bool same_ac = a.model->params() == c.model->params();
    const bool moved = !(a.model->params() == init.params());
    r.passed = same_ab && same_ac && moved;
    r.detail = std::string(same_ab ? "repeat identical" : "repeat differs") +
               (same_ac ? ", thread count invariant" : ", thread count changes result") +
               (moved ? "" : ", parameters never changed");
  });
}

CheckResult check_lr_schedule(const VerifyOptions&) {
  return timed("learning-rate schedule", [&](CheckResult& r) {
    const training::TrainConfig tc;
    const std::size_t epochs[] = {0, 499, 500, 749, 750, 999};
    const double want[] = {0.01, 0.01, 0.001, 0.001, 0.0002, 0.0002};
    std::ostringstream got;
    bool ok = true;
    for (std::size_t i = 0; i < 6; ++i) {
      const double lr = training::lr_schedule(epochs[i], tc);
      if (lr != want[i]) ok = false;
      got << (i ? ", " : "") << epochs[i] << "->" << lr;
    }
    r.passed = ok;
    r.detail = got.str();
  });
}

std::vector<CheckResult> run_all(const VerifyOptions& options) {
  return {check_gradients(options),     check_attention_stochastic(options),
          check_forward_contract(options), check_conv_oracle(options),
          check_wilcoxon_oracle(options), check_auc_oracle(options),
          check_pipeline_laws(options),   check_determinism(options),
          check_lr_schedule(options)};
}

std::string format_results(std::span<const CheckResult> results) {
  std::ostringstream out;
  char buf[64];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%7.2fs", r.seconds);
    out << (r.passed ? "PASS " : "FAIL ") << r.name << " [" << buf << "] " << r.detail << "\n";
  }
  return out.str();
}

bool all_passed(std::span<const CheckResult> results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

}  // namespace mcdc::verify
