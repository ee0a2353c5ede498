#include "neo/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <regex>

#include "neo/rng.hpp"

namespace neo {

// ----------------------------------------------------------------------------
// Number guessing

GuessDistribution GuessDistribution::uniform() {
  GuessDistribution g;
  g.probs.fill(1.0 / 9.0);
  return g;
}

void GuessDistribution::validate() const {
  double total = 0.0;
  for (double p : probs) {
    require(std::isfinite(p) && p >= 0.0, ErrorCode::kInvalidArgument,
            "guess distribution has a negative or non-finite entry");
    total += p;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorCode::kInvalidArgument,
          "guess distribution does not sum to 1");
}

double GuessDistribution::entropy() const {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::vector<double> success_curve(const GuessDistribution& g, int n_max) {
  g.validate();
  require(n_max >= 1, ErrorCode::kInvalidArgument, "n_max must be at least 1");
  std::vector<double> curve(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) {
    double hit = 0.0;
    for (double p : g.probs) hit += 1.0 - std::pow(1.0 - p, n);
    curve[static_cast<std::size_t>(n - 1)] = hit / 9.0;
  }
  return curve;
}

std::optional<int> parse_guess(std::string_view response) {
  static const std::regex pattern(R"re("?number"?\s*:?\s*"?([1-9]))re");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(response.begin(), response.end(), m, pattern)) return std::nullopt;
  return m[1].str()[0] - '0';
}

GuessSamples tally_guesses(std::vector<std::string> responses) {
  GuessSamples out;
  std::array<int, 9> counts{};
  int parsed = 0;
  for (const auto& r : responses) {
    const auto g = parse_guess(r);
    out.guesses.push_back(g);
    if (g) {
      ++counts[static_cast<std::size_t>(*g - 1)];
      ++parsed;
    } else {
      ++out.unparseable;
    }
  }
  out.refusal_rate = responses.empty() ? 1.0 : static_cast<double>(out.unparseable) / responses.size();
  require(parsed > 0, ErrorCode::kInvalidArgument, "no response could be parsed as a guess (refusal rate 1.0)");
  for (std::size_t i = 0; i < 9; ++i) out.distribution.probs[i] = static_cast<double>(counts[i]) / parsed;
  out.responses = std::move(responses);
  return out;
}

GuessSamples empirical_guess_distribution(const ModelParams<float>& params, const Vocabulary& vocab,
                                          const TokenSeq& prompt, int n_samples, std::uint64_t seed) {
  require(n_samples >= 1, ErrorCode::kInvalidArgument, "n_samples must be at least 1");
  std::vector<std::string> responses;
  responses.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    SampleOptions so;
    so.max_tokens = 16;
    so.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    responses.push_back(vocab.decode(sample(params, prompt, so)));
  }
  return tally_guesses(std::move(responses));
}

// ----------------------------------------------------------------------------
// Length control

LengthResult length_satisfaction(const ModelParams<float>& params, const Vocabulary& vocab,
                                 const std::vector<std::string>& instructions,
                                 const LengthBucket& bucket, std::string_view ensure_word,
                                 std::uint64_t seed, int max_tokens) {
  require(!instructions.empty(), ErrorCode::kInvalidArgument, "no instructions to evaluate");
  LengthResult out;
  int satisfied = 0;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    LengthRecord rec;
    rec.prompt = length_prompt(instructions[i], ensure_word, bucket);
    SampleOptions so;
    so.max_tokens = max_tokens;
    so.seed = derive_seed(seed, i);
    rec.response = vocab.decode(sample(params, chat_prompt(vocab, rec.prompt), so));
    rec.words = word_count(rec.response);
    rec.satisfied = bucket.contains(rec.words);
    satisfied += rec.satisfied ? 1 : 0;
    out.records.push_back(std::move(rec));
  }
  out.rate = static_cast<double>(satisfied) / static_cast<double>(instructions.size());
  return out;
}

// ----------------------------------------------------------------------------
// Frozen-model guarantee

InvarianceResult invariance_check(const ModelParams<float>& before, const ModelParams<float>& after,
                                  const std::vector<TokenSeq>& prompts) {
  require(before.shape.base_size == after.shape.base_size, ErrorCode::kInvalidArgument,
          "invariance check: models have different base vocabularies");
  InvarianceResult out;
  const auto base = static_cast<std::size_t>(before.shape.base_size);
  for (const auto& prompt : prompts) {
    for (TokenId id : prompt) {
      require(id >= 0 && id < before.shape.base_size, ErrorCode::kInvalidArgument,
              "invariance check: prompt contains non-base token " + std::to_string(id));
    }
    for (std::size_t t = 1; t <= prompt.size(); ++t) {
      const std::span<const TokenId> prefix(prompt.data(), t);
      const auto a = next_token_logits(before, prefix);
      const auto b = next_token_logits(after, prefix);
      ++out.positions;
      for (std::size_t i = 0; i < base; ++i) {
        if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) {
          out.pass = false;
          const double diff = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
          out.max_abs_diff = std::max(out.max_abs_diff, std::isnan(diff) ? std::numeric_limits<double>::infinity() : diff);
        }
      }
      for (std::size_t i = base; i < b.size(); ++i) {
        if (!(std::isinf(b[i]) && b[i] < 0)) {
          out.pass = false;
          out.max_abs_diff = std::numeric_limits<double>::infinity();
        }
      }
    }
  }
  return out;
}

std::vector<std::string> changed_tensors(const ModelParams<float>& a, const ModelParams<float>& b,
                                         TokenId except) {
  std::vector<const Matrix<float>*> ta, tb;
  std::vector<std::string> names;
  a.visit([&](std::string_view name, const Matrix<float>& m) {
    ta.push_back(&m);
    names.emplace_back(name);
  });
  b.visit([&](std::string_view, const Matrix<float>& m) { tb.push_back(&m); });
  std::vector<std::string> out;
  if (ta.size() != tb.size()) return {"<layer count>"};
  for (std::size_t t = 0; t < ta.size(); ++t) {
    const auto& x = *ta[t];
    const auto& y = *tb[t];
    if (t == 0) {
      const Eigen::Index rows = std::min(x.rows(), y.rows());
      if (x.cols() != y.cols()) {
        out.push_back(names[t]);
        continue;
      }
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (r == except) continue;
        if (std::memcmp(x.row(r).data(), y.row(r).data(), sizeof(float) * static_cast<std::size_t>(x.cols())) != 0) {
          out.push_back(names[t] + "[" + std::to_string(r) + "]");
        }
      }
      continue;
    }
    if (x.rows() != y.rows() || x.cols() != y.cols() ||
        std::memcmp(x.data(), y.data(), sizeof(float) * static_cast<std::size_t>(x.size())) != 0) {
      out.push_back(names[t]);
    }
  }
  return out;
}

// ----------------------------------------------------------------------------
// Quality

double mean_score(const std::vector<int>& scores) {
  require(!scores.empty(), ErrorCode::kInvalidArgument, "mean of no scores");
  double total = 0.0;
  for (int s : scores) total += s;
  return total / static_cast<double>(scores.size());
}

QualityResult quality_comparison(const ModelParams<float>& params, const Vocabulary& vocab,
                                 const Scorer& scorer, const std::vector<std::string>& instructions,
                                 std::string_view good_surface, std::uint64_t seed, int samples,
                                 int max_tokens) {
  require(!instructions.empty(), ErrorCode::kInvalidArgument, "no instructions to evaluate");
  require(samples >= 1, ErrorCode::kInvalidArgument, "samples must be at least 1");
  struct Condition {
    std::string name;
    std::string middle;
    std::string word;
    double* mean;
  };
  QualityResult out;
  const std::vector<Condition> conditions = {
      {"baseline", "that is extremely", "good", &out.mean_baseline},
      {"good", "that is extremely", std::string(good_surface), &out.mean_good},
      {"not_good", "that is extremely not", std::string(good_surface), &out.mean_not_good},
  };
  for (const auto& c : conditions) {
    std::vector<int> scores;
    for (int i = 0; i < samples; ++i) {
      const auto& instr = instructions[static_cast<std::size_t>(i) % instructions.size()];
      QualityRecord rec;
      rec.condition = c.name;
      rec.prompt = quality_prompt(instr, c.middle, c.word);
      SampleOptions so;
      so.max_tokens = max_tokens;
      so.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
      rec.response = vocab.decode(sample(params, chat_prompt(vocab, rec.prompt), so));
      rec.score = scorer(rec.prompt, rec.response);
      scores.push_back(rec.score);
      out.records.push_back(std::move(rec));
    }
    *c.mean = mean_score(scores);
  }
  return out;
}

// ----------------------------------------------------------------------------
// Gradient check

GradCheckProblem make_gradcheck_problem(int base_size, int examples, std::uint64_t seed) {
  require(base_size > Vocabulary::kControlCount + 1, ErrorCode::kInvalidArgument,
          "gradient check needs at least two non-control base tokens");
  require(examples >= 1, ErrorCode::kInvalidArgument, "gradient check needs at least one example");
  const ModelShape shape{2, 32, 4, 64, base_size + 1, base_size};
  GradCheckProblem p;
  p.neologism = base_size;
  p.params = ModelParams<double>::random(shape, derive_seed(seed, 0));
  // Larger weights than the training init so the check exercises the
  // nonlinearities instead of a near-uniform model.
  Rng rng(derive_seed(seed, 1));
  p.params.visit([&](std::string_view, Matrix<double>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.3 * rng.normal();
  });

  auto word = [&] { return static_cast<TokenId>(rng.range(Vocabulary::kControlCount, base_size - 1)); };
  auto response = [&] {
    TokenSeq r;
    const int n = rng.range(1, 6);
    for (int i = 0; i < n; ++i) r.push_back(word());
    r.push_back(Vocabulary::kEos);
    return r;
  };
  for (int e = 0; e < examples; ++e) {
    PreferenceExample ex;
    ex.prompt.push_back(Vocabulary::kBos);
    const int n = rng.range(2, 10);
    for (int i = 0; i < n; ++i) ex.prompt.push_back(word());
    const auto slot = 1 + static_cast<std::ptrdiff_t>(rng.below(static_cast<std::uint64_t>(n)));
    ex.prompt.insert(ex.prompt.begin() + slot, p.neologism);
    ex.chosen = response();
    do {
      ex.rejected = response();
    } while (ex.rejected == ex.chosen);
    ex.tag = "gradcheck";
    p.examples.push_back(std::move(ex));
  }
  return p;
}

std::vector<double> finite_difference_gradient(const ModelParams<double>& params,
                                               const ReferenceLogProbs& ref_lp,
                                               const PreferenceExample& ex, const TrainConfig& cfg,
                                               TokenId w, double eps, FdStencil stencil) {
  ModelParams<double> probe = params;
  auto loss_at = [&] {
    const PairLogProbs lp{sequence_logprob(probe, ex.prompt, ex.chosen),
                          sequence_logprob(probe, ex.prompt, ex.rejected), ref_lp.lp0_c, ref_lp.lp0_r};
    return preference_loss(lp, cfg.beta, cfg.variant).value;
  };
  std::vector<double> grad(static_cast<std::size_t>(params.shape.d_model));
  for (int j = 0; j < params.shape.d_model; ++j) {
    const double x0 = params.token_embedding(w, j);
    auto at = [&](double offset) {
      probe.token_embedding(w, j) = x0 + offset;
      return loss_at();
    };
    double g = 0.0;
    if (stencil == FdStencil::kTwoPoint) {
      g = (at(eps) - at(-eps)) / (2.0 * eps);
    } else {
      g = (8.0 * (at(eps) - at(-eps)) - (at(2 * eps) - at(-2 * eps))) / (12.0 * eps);
    }
    probe.token_embedding(w, j) = x0;
    grad[static_cast<std::size_t>(j)] = g;
  }
  return grad;
}

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  require(analytic.size() == numeric.size(), ErrorCode::kInvalidArgument, "gradient sizes differ");
  double worst = 0.0;
  for (std::size_t j = 0; j < numeric.size(); ++j) {
    const double a = analytic[j];
    const double f = numeric[j];
    worst = std::max(worst, std::abs(a - f) / std::max({std::abs(a), std::abs(f), kGradCheckFloor}));
  }
  return worst;
}

GradCheckResult gradient_check(const GradCheckProblem& problem, const TrainConfig& cfg, double eps) {
  GradCheckResult out;
  // The reference is the untouched problem model; the trained parameters
  // are a perturbed copy so the DPO margin is not identically zero.
  ModelParams<double> moved = problem.params;
  Rng rng(derive_seed(cfg.seed, 7));
  for (int j = 0; j < moved.shape.d_model; ++j) moved.token_embedding(problem.neologism, j) += 0.5 * rng.normal();
  const auto ref = snapshot_reference(problem.params);
  for (const auto& ex : problem.examples) {
    const ReferenceLogProbs ref_lp = reference_logprobs(ref, ex);
    const auto analytic = embedding_gradient(moved, ref_lp, ex, cfg, problem.neologism);
    const auto numeric = finite_difference_gradient(moved, ref_lp, ex, cfg, problem.neologism, eps);
    const auto two_point =
        finite_difference_gradient(moved, ref_lp, ex, cfg, problem.neologism, eps, FdStencil::kTwoPoint);
    const double worst = max_relative_error(analytic.grad, numeric);
    out.per_example.push_back(worst);
    out.max_rel_error = std::max(out.max_rel_error, worst);
    out.max_rel_error_two_point = std::max(out.max_rel_error_two_point, max_relative_error(analytic.grad, two_point));
  }
  return out;
}

// ----------------------------------------------------------------------------
// Reports

std::string EvalReport::serialize() const {
  nlohmann::ordered_json head;
  head["experiment"] = experiment;
  head["checkpoint_hash"] = checkpoint_hash;
  head["registry_hash"] = registry_hash;
  head["seed"] = seed;
  std::string out = head.dump() + "\n";
  for (const auto& r : records) out += r.dump() + "\n";
  nlohmann::ordered_json tail;
  tail["aggregate"] = aggregate;
  out += tail.dump() + "\n";
  return out;
}

EvalReport EvalReport::parse(std::string_view text) {
  EvalReport rep;
  std::vector<nlohmann::ordered_json> lines;
  std::size_t pos = 0;
  try {
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      const auto line = text.substr(pos, end - pos);
      pos = end + 1;
      if (!line.empty()) lines.push_back(nlohmann::ordered_json::parse(line));
    }
    require(lines.size() >= 2, ErrorCode::kFormat, "eval report: missing header or aggregate");
    rep.experiment = lines.front().at("experiment").get<std::string>();
    rep.checkpoint_hash = lines.front().at("checkpoint_hash").get<std::string>();
    rep.registry_hash = lines.front().at("registry_hash").get<std::string>();
    rep.seed = lines.front().at("seed").get<std::uint64_t>();
    rep.aggregate = lines.back().at("aggregate");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("eval report: ") + e.what());
  }
  rep.records.assign(lines.begin() + 1, lines.end() - 1);
  return rep;
}

std::string success_curve_plot(const std::vector<std::pair<std::string, std::vector<double>>>& curves) {
  std::string out;
  char buf[64];
  for (std::size_t c = 0; c < curves.size(); ++c) {
    if (c) out += "\n";
    out += "# " + curves[c].first + "\n";
    for (std::size_t n = 0; n < curves[c].second.size(); ++n) {
      std::snprintf(buf, sizeof buf, "%zu %.6f\n", n + 1, curves[c].second[n]);
      out += buf;
    }
  }
  return out;
}

}  // namespace neo
