// End-to-end acceptance run. Drives the `neo` tool for everything that has a
// command (dataset, teach, eval) against a checkpoint pretrained by the
// acceptance_pretrain fixture, then checks each criterion and prints one
// PASS/FAIL line per criterion.
//
// usage: acceptance <neo binary> <configs dir> <work dir>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "neo/commands.hpp"
#include "neo/eval.hpp"
#include "neo/io.hpp"
#include "neo/losses.hpp"

using namespace neo;
namespace fs = std::filesystem;

namespace {

struct Env {
  fs::path neo;
  fs::path configs;
  fs::path work;
  fs::path checkpoint;
  fs::path registry;  // length, diversity and the first quality seed
};

Env env;

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// Runs the tool; output goes to a per-step log in the work dir.
void run(const std::string& name, const std::string& args) {
  const fs::path log = env.work / (name + ".log");
  const std::string cmd = env.neo.string() + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) {
    fail(ErrorCode::kInternal, "'" + name + "' exited with " + std::to_string(rc) + ": " + read_file(log));
  }
}

std::string conf(const std::string& name) { return (env.configs / name).string(); }
std::string at(const std::string& name) { return (env.work / name).string(); }

EvalReport report(const std::string& name) { return EvalReport::parse(read_file(env.work / name)); }

std::string dataset(const std::string& kind, const std::string& out, std::uint64_t seed) {
  run("dataset_" + out, "dataset " + kind + " --config " + conf("dataset_" + kind + ".conf") + " --out " + at(out) +
                            " --checkpoint " + env.checkpoint.string() + " --seed " + std::to_string(seed));
  return at(out);
}

void teach(const std::string& kind, const std::string& data, const std::string& surface, const fs::path& registry,
           std::uint64_t seed) {
  run("teach_" + surface + "_" + registry.stem().string(),
      "teach --checkpoint " + env.checkpoint.string() + " --dataset " + data + " --surface " + surface +
          " --config " + conf("teach_" + kind + ".conf") + " --registry " + registry.string() + " --seed " +
          std::to_string(seed));
}

void eval(const std::string& kind, const fs::path& registry, const std::string& out, std::uint64_t seed,
          const std::string& extra = "") {
  run("eval_" + out, "eval " + kind + " --checkpoint " + env.checkpoint.string() + " --registry " +
                         registry.string() + " --out " + at(out) + " --seed " + std::to_string(seed) + " " + extra);
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

// ----------------------------------------------------------------------------

Verdict skyline() {
  const auto curve = success_curve(GuessDistribution::uniform(), 40);
  const double s10 = curve[9];
  const double s40 = curve[39];
  const bool at10 = std::abs(s10 - 0.69198) <= 1e-5;
  const bool at40 = s40 >= 0.99;
  std::string detail = "n=10 " + fmt("%.6f", s10) + " (target 0.69198 +/- 1e-5), n=40 " + fmt("%.6f", s40) +
                       " (target >= 0.99)";
  if (!at10) {
    // The target value itself is off: the stated closed form
    // 1 - (8/9)^10 evaluates to 0.6920539.
    detail += "; 1-(8/9)^10 = " + fmt("%.7f", 1.0 - std::pow(8.0 / 9.0, 10)) + ", so 0.69198 is unreachable";
  }
  return {at10 && at40, detail};
}

Verdict loss_identities(const std::vector<PreferenceExample>& examples, const ModelParams<float>& init, TokenId w) {
  const auto ref = snapshot_reference(init);
  double worst_dpo = 0.0, worst_apo = 0.0;
  for (const auto& ex : examples) {
    TrainConfig cfg;
    cfg.variant = LossVariant::kDpoStandard;
    worst_dpo = std::max(worst_dpo, std::abs(embedding_gradient(init, ref, ex, cfg, w).loss - std::numbers::ln2));
    cfg.variant = LossVariant::kApoUpStandard;
    worst_apo = std::max(worst_apo, std::abs(embedding_gradient(init, ref, ex, cfg, w).loss - 2 * std::numbers::ln2));
  }
  Rng rng(2024);
  int flips = 0;
  for (int i = 0; i < 1000; ++i) {
    const PairLogProbs p{-30 * rng.uniform(), -30 * rng.uniform(), -30 * rng.uniform(), -30 * rng.uniform()};
    const double beta = 0.01 + rng.uniform();
    const PairLogProbs swapped{p.lp_c, p.lp_r, p.lp0_r, p.lp0_c};
    // Swapping lp0_c and lp0_r negates the reference margin: the printed
    // sign equals the standard form on the swapped input, and APO-up adds
    // the same anchor term to either.
    const double a = dpo_loss(p, beta, LossVariant::kDpoAsPrinted);
    const double b = dpo_loss(swapped, beta, LossVariant::kDpoStandard);
    const double anchor_printed = apo_up_loss(p, beta, LossVariant::kApoUpAsPrinted) - a;
    const double anchor = neg_log_sigmoid(beta * (p.lp_c - p.lp0_c));
    if (std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)) && std::abs(anchor_printed - anchor) <= 1e-12) ++flips;
  }
  const bool pass = worst_dpo <= 1e-12 && worst_apo <= 1e-12 && flips == 1000;
  return {pass, "over " + std::to_string(examples.size()) + " pairs at theta0: |dpo - ln2| max " +
                    fmt("%.2e", worst_dpo) + ", |apo_up - 2ln2| max " + fmt("%.2e", worst_apo) +
                    "; sign flip holds on " + std::to_string(flips) + "/1000"};
}

Verdict gradient_oracle() {
  eval("gradcheck", env.registry, "gradcheck.jsonl", 0, "--config " + at("gradcheck.conf"));
  const auto r = report("gradcheck.jsonl");
  const double e = r.aggregate.at("max_rel_error").get<double>();
  const auto n = r.records.size();
  return {e <= 1e-4 && n == 20, "max relative error " + fmt("%.2e", e) + " over " + std::to_string(n) +
                                    " examples (four-point stencil, eps 1e-3; two-point " +
                                    fmt("%.2e", r.aggregate.at("max_rel_error_two_point").get<double>()) + ")"};
}

Verdict frozen(const std::vector<std::pair<std::string, fs::path>>& registries, const std::string& ckpt_hash) {
  bool pass = sha256_file(env.checkpoint) == ckpt_hash;
  std::string detail = pass ? "checkpoint bytes unchanged" : "checkpoint file CHANGED";
  for (const auto& [name, reg] : registries) {
    const std::string out = "invariance_" + name + ".jsonl";
    eval("invariance", reg, out, 11, "--config " + at("invariance.conf"));
    const auto r = report(out);
    const double diff = r.aggregate.at("max_abs_diff").get<double>();
    const bool ok = r.aggregate.at("pass").get<bool>() && diff == 0.0 && r.aggregate.at("prompts").get<int>() == 100 &&
                    r.aggregate.at("changed_tensors").empty();
    pass = pass && ok;
    detail += "; " + name + ": max diff " + fmt("%g", diff) + ", changed tensors " +
              std::to_string(r.aggregate.at("changed_tensors").size());
  }
  return {pass, detail};
}

Verdict masking(const LoadedModel& model) {
  const auto base = static_cast<TokenId>(model.vocab.base_size());
  const auto neologisms = static_cast<int>(model.vocab.size()) - base;
  std::vector<std::string> prompts;
  const auto held = split_instructions(50, 0).held_out;
  for (std::size_t i = 0; i < held.size(); ++i) {
    prompts.push_back(length_prompt(held[i], "ensure_w", kBucketB));
    prompts.push_back(quality_prompt(held[i], "that is extremely", "good_w"));
    prompts.push_back(diversity_prompt(guess_instructions()[i % 3], "diverse_w", 2 + static_cast<int>(i % 8)));
    prompts.push_back(held[i]);
  }
  long tokens = 0, emitted = 0, distributions = 0, nonzero = 0;
  for (std::size_t i = 0; tokens < 10000; ++i) {
    const TokenSeq prompt = chat_prompt(model.vocab, prompts[i % prompts.size()]);
    SampleOptions so;
    so.seed = derive_seed(77, i);
    so.max_tokens = 96;
    const TokenSeq out = sample(model.params, prompt, so);
    TokenSeq prefix = prompt;
    for (TokenId t : out) {
      // The full distribution the token was drawn from.
      const auto logits = next_token_logits(model.params, prefix);
      ++distributions;
      for (std::size_t j = static_cast<std::size_t>(base); j < logits.size(); ++j) {
        if (!(std::isinf(logits[j]) && logits[j] < 0) || std::exp(static_cast<double>(logits[j])) != 0.0) ++nonzero;
      }
      emitted += t >= base ? 1 : 0;
      prefix.push_back(t);
      ++tokens;
    }
  }
  return {emitted == 0 && nonzero == 0 && neologisms == 3,
          std::to_string(tokens) + " tokens sampled with " + std::to_string(neologisms) +
              " neologisms attached: " + std::to_string(emitted) + " neologism ids emitted, " +
              std::to_string(nonzero) + " nonzero neologism probabilities in " + std::to_string(distributions) +
              " distributions"};
}

Verdict length_uplift() {
  const auto r = report("eval_length.jsonl");
  const double b = r.aggregate.at("baseline_rate").get<double>();
  const double n = r.aggregate.at("neologism_rate").get<double>();
  const auto held = r.records.size() / 2;
  return {b <= 0.10 && n >= b + 0.40 && held == 50,
          "bucket 40-60 on " + std::to_string(held) + " held-out instructions: baseline " + fmt("%.2f", b) +
              ", ensure_w " + fmt("%.2f", n) + " (uplift " + fmt("%+.2f", n - b) + ", need >= +0.40)"};
}

Verdict diversity_uplift() {
  const auto r = report("eval_diversity.jsonl");
  const double dh = r.aggregate.at("entropy_gain").get<double>();
  const double ds = r.aggregate.at("success_gain_at_10").get<double>();
  const auto& b = r.aggregate.at("baseline");
  const auto& t = r.aggregate.at("neologism");
  return {dh >= 0.5 && ds >= 0.15,
          "entropy " + fmt("%.3f", b.at("entropy").get<double>()) + " -> " + fmt("%.3f", t.at("entropy").get<double>()) +
              " nats (" + fmt("%+.3f", dh) + ", need >= +0.5); success@10 " +
              fmt("%.3f", b.at("success_at_10").get<double>()) + " -> " +
              fmt("%.3f", t.at("success_at_10").get<double>()) + " (" + fmt("%+.3f", ds) + ", need >= +0.15)"};
}

Verdict quality_direction() {
  bool pass = true;
  std::string detail;
  for (int seed = 1; seed <= 3; ++seed) {
    const auto r = report("eval_quality_" + std::to_string(seed) + ".jsonl");
    const double base = r.aggregate.at("mean_baseline").get<double>();
    const double good = r.aggregate.at("mean_good").get<double>();
    const double not_good = r.aggregate.at("mean_not_good").get<double>();
    pass = pass && good > base && r.records.size() == 150;
    detail += (seed > 1 ? "; " : "") + std::string("seed ") + std::to_string(seed) + ": good_w " + fmt("%.2f", good) +
              " vs baseline " + fmt("%.2f", base) + " (not good_w " + fmt("%.2f", not_good) + ", ungated)";
  }
  return {pass, detail};
}

Verdict determinism(const fs::path& length_data, const fs::path& diversity_data) {
  std::vector<std::string> broken;
  // Checkpoint save/load round trip.
  const auto ck = load_checkpoint(env.checkpoint);
  const fs::path copy = env.work / "roundtrip" / env.checkpoint.filename();
  fs::create_directories(copy.parent_path());
  save_checkpoint(copy, ck.params, ck.vocab_path);
  if (read_file(copy) != read_file(env.checkpoint)) broken.push_back("checkpoint round trip");

  // Teach rerun with the same config and seed into a fresh registry.
  const fs::path rerun = env.work / "registry_rerun.jsonl";
  fs::remove(rerun);
  teach("length", length_data.string(), "ensure_w", rerun, 5);
  const auto first = NeologismRegistry::load(env.registry);
  const auto second = NeologismRegistry::load(rerun);
  const auto* a = first.find("ensure_w");
  const auto* b = second.find("ensure_w");
  if (!a || !b || a->vector != b->vector) broken.push_back("teach rerun");

  // Dataset builders and the corpus.
  if (read_file(dataset("length", "length_rerun.jsonl", 3)) != read_file(length_data)) broken.push_back("length dataset");
  if (read_file(dataset("diversity", "diversity_rerun.jsonl", 3)) != read_file(diversity_data))
    broken.push_back("diversity dataset");
  if (read_file(at("quality_1.jsonl")) != read_file(dataset("quality", "quality_rerun.jsonl", 1)))
    broken.push_back("quality dataset");
  const auto spec = CorpusSpec::from_config(KeyValueConfig::load(conf("pretrain.conf")));
  if (gen_pretraining_corpus(spec, 1) != read_file(env.work / "base.corpus.txt")) broken.push_back("corpus");

  std::string detail = "checkpoint round trip, teach rerun, length/diversity/quality datasets, corpus: ";
  if (broken.empty()) return {true, detail + "all identical"};
  for (const auto& s : broken) detail += s + " differs; ";
  return {false, detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 4) {
    std::cerr << "usage: acceptance <neo binary> <configs dir> <work dir>\n";
    return 2;
  }
  env.neo = fs::absolute(argv[1]);
  env.configs = fs::absolute(argv[2]);
  env.work = fs::absolute(argv[3]);
  env.checkpoint = env.work / "base.neo";
  env.registry = env.work / "registry.jsonl";

  std::vector<std::pair<std::string, Verdict>> results;
  auto record = [&](const std::string& name, const std::function<Verdict()>& f) {
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    results.emplace_back(name, v);
  };

  // Pipeline first; criteria read its outputs.
  std::string ckpt_hash;
  fs::path length_data, diversity_data;
  try {
    if (!fs::exists(env.checkpoint)) fail(ErrorCode::kIo, "missing " + env.checkpoint.string() + " (run the pretrain fixture)");
    ckpt_hash = sha256_file(env.checkpoint);
    fs::remove(env.registry);
    write_file(env.work / "gradcheck.conf", "examples = 20\n");
    write_file(env.work / "invariance.conf", "prompts = 100\n");

    length_data = dataset("length", "length.jsonl", 3);
    teach("length", length_data.string(), "ensure_w", env.registry, 5);
    eval("length", env.registry, "eval_length.jsonl", 7, "--config " + conf("dataset_length.conf") + " --surface ensure_w");

    diversity_data = dataset("diversity", "diversity.jsonl", 3);
    teach("diversity", diversity_data.string(), "diverse_w", env.registry, 5);
    eval("diversity", env.registry, "eval_diversity.jsonl", 7, "--surface diverse_w");

    for (int seed = 1; seed <= 3; ++seed) {
      const std::string s = std::to_string(seed);
      const fs::path reg = seed == 1 ? env.registry : env.work / ("registry_quality_" + s + ".jsonl");
      if (seed != 1) fs::remove(reg);
      const auto data = dataset("quality", "quality_" + s + ".jsonl", static_cast<std::uint64_t>(seed));
      teach("quality", data, "good_w", reg, static_cast<std::uint64_t>(seed));
      eval("quality", reg, "eval_quality_" + s + ".jsonl", static_cast<std::uint64_t>(seed), "--surface good_w");
    }
  } catch (const std::exception& e) {
    std::cout << "pipeline error: " << e.what() << std::endl;
  }

  record("1 analytic diversity skyline", skyline);
  record("2 loss identities", [&] {
    const LoadedModel base = load_model(env.checkpoint);
    const auto [vocab, w] = base.vocab.add_neologism("ensure_w");
    TrainConfig cfg;
    cfg.init_token = "ensure";
    const auto init = init_neologism_embedding(base.params.with_neologism_rows(1), vocab, w, cfg);
    auto records = load_dataset(length_data);
    records.resize(std::min<std::size_t>(records.size(), 20));
    return loss_identities(encode_dataset(vocab, records, w), init, w);
  });
  record("3 gradient oracle", gradient_oracle);
  record("4 frozen-model guarantee", [&] {
    return frozen({{"main", env.registry},
                   {"quality_2", env.work / "registry_quality_2.jsonl"},
                   {"quality_3", env.work / "registry_quality_3.jsonl"}},
                  ckpt_hash);
  });
  record("5 masking", [&] { return masking(attach_registry(load_model(env.checkpoint), NeologismRegistry::load(env.registry))); });
  record("6 length-control uplift", length_uplift);
  record("7 diversity uplift", diversity_uplift);
  record("8 quality direction", quality_direction);
  record("9 determinism and persistence", [&] { return determinism(length_data, diversity_data); });

  int passed = 0;
  for (const auto& [name, v] : results) passed += v.pass ? 1 : 0;
  std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
  return passed == static_cast<int>(results.size()) ? 0 : 1;
}
