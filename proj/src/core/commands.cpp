#include "neo/commands.hpp"

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "neo/datasets.hpp"
#include "neo/eval.hpp"
#include "neo/pretrain.hpp"

namespace neo {

namespace fs = std::filesystem;

// ----------------------------------------------------------------------------
// Manifests

std::string RunManifest::serialize() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["version"] = version;
  j["seed"] = seed;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::parse(std::string_view text) {
  RunManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.command = j.at("command").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("manifest: ") + e.what());
  }
  return m;
}

fs::path manifest_path(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

fs::path default_registry(const fs::path& checkpoint) { return checkpoint.parent_path() / "registry.jsonl"; }

namespace {

void require_option(const std::string& value, const char* flag) {
  require(!value.empty(), ErrorCode::kInvalidArgument, std::string("missing required option --") + flag);
}

KeyValueConfig load_config(const std::string& path) {
  return path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
}

fs::path registry_path(const CommandOptions& opts) {
  return opts.registry.empty() ? default_registry(opts.checkpoint) : fs::path(opts.registry);
}

void add_input(RunManifest& m, const fs::path& path) {
  if (!path.empty() && fs::exists(path)) m.inputs[path.string()] = sha256_file(path);
}

void finish_manifest(RunManifest& m, const std::vector<fs::path>& outputs, const fs::path& where) {
  for (const auto& p : outputs) m.outputs[p.string()] = sha256_file(p);
  write_file(where, m.serialize());
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string default_surface(const std::string& kind) {
  if (kind == "length") return "ensure_w";
  if (kind == "diversity") return "diverse_w";
  if (kind == "quality") return "good_w";
  return "";
}

std::string resolve_surface(const CommandOptions& opts, const KeyValueConfig& kv) {
  if (!opts.surface.empty()) return opts.surface;
  return kv.get("surface", default_surface(opts.kind));
}

LengthBucket parse_bucket(const std::string& name) {
  if (name == "A" || name == kBucketA.label()) return kBucketA;
  if (name == "B" || name == kBucketB.label()) return kBucketB;
  fail(ErrorCode::kInvalidArgument, "unknown length bucket '" + name + "' (expected A or B)");
}

std::vector<std::string> first_n(const std::vector<std::string>& items, int n) {
  require(n >= 1, ErrorCode::kInvalidArgument, "instruction count must be positive");
  if (static_cast<std::size_t>(n) < items.size()) return {items.begin(), items.begin() + n};
  return items;
}

}  // namespace

// ----------------------------------------------------------------------------
// pretrain

CommandOutcome cmd_pretrain(const CommandOptions& opts) {
  require_option(opts.config, "config");
  require_option(opts.out, "out");
  const KeyValueConfig kv = KeyValueConfig::load(opts.config);
  const CorpusSpec spec = CorpusSpec::from_config(kv);
  const PretrainConfig pcfg = PretrainConfig::from_config(kv);

  const fs::path out(opts.out);
  const fs::path dir = out.parent_path();
  const std::string vocab_name = out.stem().string() + ".vocab";
  const fs::path vocab_path = dir / vocab_name;
  const fs::path corpus_path = dir / (out.stem().string() + ".corpus.txt");
  const fs::path log_path(out.string() + ".log.jsonl");

  const std::string corpus = gen_pretraining_corpus(spec, opts.seed);
  const PretrainResult result = pretrain(corpus, pcfg, opts.seed);

  write_file(corpus_path, corpus);
  result.vocab.save(vocab_path);
  save_checkpoint(out, result.params, vocab_name);
  std::string log;
  for (const auto& h : result.history) {
    nlohmann::ordered_json j;
    j["step"] = h.step;
    j["val_loss"] = h.loss;
    j["val_perplexity"] = h.perplexity;
    log += j.dump() + "\n";
  }
  nlohmann::ordered_json tail;
  tail["steps"] = result.steps;
  tail["best_step"] = result.best_step;
  tail["base_vocab"] = result.vocab.size();
  log += tail.dump() + "\n";
  write_file(log_path, log);

  RunManifest m;
  m.command = "pretrain";
  m.config = kv.values();
  m.seed = opts.seed;
  add_input(m, opts.config);
  finish_manifest(m, {out, vocab_path, corpus_path, log_path}, manifest_path(out));

  const auto& first = result.history.front();
  double best = first.perplexity;
  for (const auto& h : result.history) best = std::min(best, h.perplexity);
  std::ostringstream s;
  s << "pretrained " << result.steps << " steps, base vocabulary " << result.vocab.size()
    << ", validation perplexity " << fmt("%.3f", first.perplexity) << " -> " << fmt("%.3f", best)
    << " (best step " << result.best_step << ")\ncheckpoint: " << out.string();
  return {s.str(), false};
}

// ----------------------------------------------------------------------------
// dataset

CommandOutcome cmd_dataset(const CommandOptions& opts) {
  require_option(opts.kind, "kind");
  require_option(opts.out, "out");
  const KeyValueConfig kv = load_config(opts.config);
  const std::string surface = resolve_surface(opts, kv);
  require(!surface.empty(), ErrorCode::kInvalidArgument, "unknown dataset kind '" + opts.kind + "'");
  const int holdout = kv.get("holdout_instructions", 50);
  const auto train = split_instructions(holdout, 0).train;

  RunManifest m;
  m.command = "dataset " + opts.kind;
  m.config = kv.values();
  m.config["surface"] = surface;
  m.seed = opts.seed;
  add_input(m, opts.config);

  std::vector<PreferenceRecord> records;
  if (opts.kind == "length") {
    const LengthBucket bucket = parse_bucket(kv.get("bucket", std::string("B")));
    records = build_length_pairs(first_n(train, kv.get("instructions", 400)), bucket, surface, opts.seed);
  } else if (opts.kind == "diversity") {
    const auto guesses = guess_instructions();
    std::vector<std::string> instructions;
    const int n = kv.get("instructions", 60);
    for (int i = 0; i < n; ++i) instructions.push_back(guesses[static_cast<std::size_t>(i) % guesses.size()]);
    records = build_diversity_pairs(instructions, surface, kv.get("k_max", 5), opts.seed);
  } else if (opts.kind == "quality") {
    require_option(opts.checkpoint, "checkpoint");
    const LoadedModel base = load_model(opts.checkpoint);
    add_input(m, opts.checkpoint);
    QualityPairOptions qo;
    qo.samples_per_instruction = kv.get("samples_per_instruction", qo.samples_per_instruction);
    qo.max_tokens = kv.get("max_tokens", qo.max_tokens);
    qo.temperature = kv.get("temperature", qo.temperature);
    records = build_quality_pairs(first_n(train, kv.get("instructions", 300)), base.params, base.vocab,
                                  rule_based_score, surface, opts.seed, qo);
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown dataset kind '" + opts.kind + "'");
  }
  require(!records.empty(), ErrorCode::kInvalidArgument, "the builder produced no preference pairs");
  save_dataset(opts.out, records);
  finish_manifest(m, {opts.out}, manifest_path(opts.out));
  return {"wrote " + std::to_string(records.size()) + " " + opts.kind + " pairs for '" + surface + "' to " +
              opts.out,
          false};
}

// ----------------------------------------------------------------------------
// teach

CommandOutcome cmd_teach(const CommandOptions& opts) {
  require_option(opts.checkpoint, "checkpoint");
  require_option(opts.dataset, "dataset");
  require_option(opts.surface, "surface");
  const fs::path registry_file = registry_path(opts);
  const std::string hash_before = sha256_file(opts.checkpoint);

  const KeyValueConfig kv = load_config(opts.config);
  TrainConfig cfg = TrainConfig::from_config(kv);
  if (opts.seed_given) cfg.seed = opts.seed;

  const LoadedModel base = load_model(opts.checkpoint);
  const auto records = load_dataset(opts.dataset);
  const auto [vocab, w] = base.vocab.add_neologism(opts.surface);
  const ModelParams<float> init =
      init_neologism_embedding(base.params.with_neologism_rows(1), vocab, w, cfg);
  const auto ref = snapshot_reference(init);
  const auto examples = encode_dataset(vocab, records, w);

  RunManifest m;
  m.command = "teach";
  m.config = cfg.to_config().values();
  m.config["surface"] = opts.surface;
  m.seed = cfg.seed;
  add_input(m, opts.checkpoint);
  add_input(m, opts.dataset);
  add_input(m, opts.config);
  add_input(m, registry_file);

  const fs::path stem(registry_file.string() + "." + opts.surface);
  const fs::path log_path(stem.string() + ".log.jsonl");
  TrainResult result;
  try {
    result = train_neologism(ref.params(), ref, examples, cfg, w);
  } catch (const TrainingAborted& e) {
    write_file(log_path, e.record().to_jsonl());
    throw;
  }
  write_file(log_path, result.record.to_jsonl());

  CommandOutcome outcome;
  const auto changed = changed_tensors(ref.params(), result.params, w);
  if (!changed.empty()) {
    outcome.invariant_failed = true;
    outcome.summary = "frozen weights changed during training: " + changed.front() + "\n";
  }
  if (sha256_file(opts.checkpoint) != hash_before) {
    outcome.invariant_failed = true;
    outcome.summary += "checkpoint file changed during training\n";
  }
  if (outcome.invariant_failed) return outcome;

  NeologismRegistry registry = NeologismRegistry::load(registry_file);
  RegistryEntry entry;
  entry.surface = opts.surface;
  entry.vector = result.record.final_row;
  entry.init_token = cfg.init_token;
  entry.config_hash = cfg.hash();
  entry.checkpoint_hash = base.checkpoint_hash;
  registry.put(std::move(entry));
  registry.save(registry_file);
  finish_manifest(m, {registry_file, log_path}, manifest_path(stem));

  const auto& rec = result.record;
  std::ostringstream s;
  s << "taught '" << opts.surface << "' in " << rec.steps << " steps (" << to_string(rec.stop_reason)
    << "), loss EMA " << fmt("%.4f", rec.ema.front()) << " -> " << fmt("%.4f", rec.ema.back())
    << "\nregistry: " << registry_file.string();
  outcome.summary = s.str();
  return outcome;
}

// ----------------------------------------------------------------------------
// eval

namespace {

// Neologism-free chat prompts drawn from every prompt family of the corpus.
std::vector<TokenSeq> invariance_prompts(const Vocabulary& vocab, int count, std::uint64_t seed) {
  const auto stories = story_instructions();
  const auto guesses = guess_instructions();
  const std::vector<std::string> tails = {
      "", " make it very long .", " ensure that the response is between 40-60 words .",
      " give me a response that is extremely good ."};
  Rng rng(seed);
  std::vector<TokenSeq> out;
  for (int i = 0; i < count; ++i) {
    std::string text;
    if (i % 5 == 4) {
      text = diversity_prompt(guesses[rng.below(guesses.size())], "give", rng.range(2, 9));
    } else {
      text = stories[rng.below(stories.size())] + tails[rng.below(tails.size())];
    }
    out.push_back(chat_prompt(vocab, text));
  }
  return out;
}

void require_neologism(const LoadedModel& model, const std::string& surface) {
  const auto id = model.vocab.find(surface);
  require(id.has_value() && model.vocab.is_neologism(*id), ErrorCode::kInvalidArgument,
          "neologism '" + surface + "' is not in the registry");
}

nlohmann::ordered_json distribution_json(const GuessSamples& g) {
  nlohmann::ordered_json j;
  j["probs"] = g.distribution.probs;
  j["entropy"] = g.distribution.entropy();
  j["success_at_10"] = success_curve(g.distribution, 10)[9];
  j["refusal_rate"] = g.refusal_rate;
  return j;
}

}  // namespace

CommandOutcome cmd_eval(const CommandOptions& opts) {
  require_option(opts.kind, "kind");
  require_option(opts.checkpoint, "checkpoint");
  require_option(opts.out, "out");
  const KeyValueConfig kv = load_config(opts.config);
  const fs::path registry_file = registry_path(opts);
  const LoadedModel base = load_model(opts.checkpoint);
  const NeologismRegistry registry = NeologismRegistry::load(registry_file);
  const LoadedModel model = attach_registry(base, registry);
  const std::string surface = resolve_surface(opts, kv);

  EvalReport report;
  report.experiment = opts.kind;
  report.checkpoint_hash = base.checkpoint_hash;
  report.registry_hash = sha256_hex(registry.serialize());
  report.seed = opts.seed;

  RunManifest m;
  m.command = "eval " + opts.kind;
  m.config = kv.values();
  m.seed = opts.seed;
  add_input(m, opts.checkpoint);
  add_input(m, registry_file);
  add_input(m, opts.config);

  CommandOutcome outcome;
  std::ostringstream s;
  std::vector<fs::path> outputs{opts.out};
  const auto held_out = split_instructions(kv.get("holdout_instructions", 50), 0).held_out;

  if (opts.kind == "length") {
    require_neologism(model, surface);
    m.config["surface"] = surface;
    const LengthBucket bucket = parse_bucket(kv.get("bucket", std::string("B")));
    const LengthResult baseline = length_satisfaction(model.params, model.vocab, held_out, bucket, "ensure", opts.seed);
    const LengthResult treated = length_satisfaction(model.params, model.vocab, held_out, bucket, surface, opts.seed);
    for (const auto* r : {&baseline, &treated}) {
      for (const auto& rec : r->records) {
        nlohmann::ordered_json j;
        j["condition"] = r == &baseline ? "baseline" : "neologism";
        j["prompt"] = rec.prompt;
        j["words"] = rec.words;
        j["satisfied"] = rec.satisfied;
        j["response"] = rec.response;
        report.records.push_back(std::move(j));
      }
    }
    report.aggregate["bucket"] = bucket.label();
    report.aggregate["baseline_rate"] = baseline.rate;
    report.aggregate["neologism_rate"] = treated.rate;
    report.aggregate["uplift"] = treated.rate - baseline.rate;
    s << "length " << bucket.label() << ": baseline " << fmt("%.2f", baseline.rate) << ", " << surface << " "
      << fmt("%.2f", treated.rate);
  } else if (opts.kind == "diversity") {
    require_neologism(model, surface);
    m.config["surface"] = surface;
    const int samples = kv.get("samples", 1000);
    const int k = kv.get("k", 2);
    const int n_max = kv.get("n_max", 40);
    const std::string instruction = guess_instructions().front();
    const auto base_prompt = chat_prompt(model.vocab, diversity_prompt(instruction, "give", k));
    const auto neo_prompt = chat_prompt(model.vocab, diversity_prompt(instruction, surface, k));
    const GuessSamples b = empirical_guess_distribution(model.params, model.vocab, base_prompt, samples, opts.seed);
    const GuessSamples t = empirical_guess_distribution(model.params, model.vocab, neo_prompt, samples, opts.seed);
    for (const auto* g : {&b, &t}) {
      for (std::size_t i = 0; i < g->responses.size(); ++i) {
        nlohmann::ordered_json j;
        j["condition"] = g == &b ? "baseline" : "neologism";
        j["response"] = g->responses[i];
        j["guess"] = g->guesses[i] ? nlohmann::ordered_json(*g->guesses[i]) : nlohmann::ordered_json(nullptr);
        report.records.push_back(std::move(j));
      }
    }
    const auto uniform = success_curve(GuessDistribution::uniform(), n_max);
    const auto base_curve = success_curve(b.distribution, n_max);
    const auto neo_curve = success_curve(t.distribution, n_max);
    report.aggregate["baseline"] = distribution_json(b);
    report.aggregate["neologism"] = distribution_json(t);
    report.aggregate["uniform_success_at_10"] = uniform[std::min(9, n_max - 1)];
    report.aggregate["entropy_gain"] = t.distribution.entropy() - b.distribution.entropy();
    report.aggregate["success_gain_at_10"] =
        success_curve(t.distribution, 10)[9] - success_curve(b.distribution, 10)[9];
    const fs::path plot(opts.out + ".plot.dat");
    write_file(plot, success_curve_plot({{"uniform", uniform}, {"baseline", base_curve}, {surface, neo_curve}}));
    outputs.push_back(plot);
    s << "diversity: entropy " << fmt("%.3f", b.distribution.entropy()) << " -> "
      << fmt("%.3f", t.distribution.entropy()) << " nats; success@10 "
      << fmt("%.3f", success_curve(b.distribution, 10)[9]) << " -> "
      << fmt("%.3f", success_curve(t.distribution, 10)[9]) << "; uniform n=10: "
      << fmt("%.3f", success_curve(GuessDistribution::uniform(), 10)[9]) << "\nplot: " << plot.string();
  } else if (opts.kind == "quality") {
    require_neologism(model, surface);
    m.config["surface"] = surface;
    const QualityResult q = quality_comparison(model.params, model.vocab, rule_based_score, held_out, surface,
                                               opts.seed, kv.get("samples", 50));
    for (const auto& rec : q.records) {
      nlohmann::ordered_json j;
      j["condition"] = rec.condition;
      j["prompt"] = rec.prompt;
      j["score"] = rec.score;
      j["response"] = rec.response;
      report.records.push_back(std::move(j));
    }
    report.aggregate["mean_baseline"] = q.mean_baseline;
    report.aggregate["mean_good"] = q.mean_good;
    report.aggregate["mean_not_good"] = q.mean_not_good;
    s << "quality: baseline " << fmt("%.2f", q.mean_baseline) << ", extremely " << surface << " "
      << fmt("%.2f", q.mean_good) << ", extremely not " << surface << " " << fmt("%.2f", q.mean_not_good);
  } else if (opts.kind == "invariance") {
    const auto prompts = invariance_prompts(base.vocab, kv.get("prompts", 100), opts.seed);
    InvarianceResult total;
    for (const auto& p : prompts) {
      const InvarianceResult r = invariance_check(base.params, model.params, {p});
      nlohmann::ordered_json j;
      j["prompt"] = base.vocab.decode(p);
      j["positions"] = r.positions;
      j["max_abs_diff"] = r.max_abs_diff;
      j["pass"] = r.pass;
      report.records.push_back(std::move(j));
      total.pass = total.pass && r.pass;
      total.positions += r.positions;
      total.max_abs_diff = std::max(total.max_abs_diff, r.max_abs_diff);
    }
    const auto changed = changed_tensors(base.params, model.params, -1);
    report.aggregate["prompts"] = prompts.size();
    report.aggregate["positions"] = total.positions;
    report.aggregate["max_abs_diff"] = total.max_abs_diff;
    report.aggregate["changed_tensors"] = changed;
    report.aggregate["neologisms"] = registry.entries().size();
    const bool pass = total.pass && changed.empty();
    report.aggregate["pass"] = pass;
    outcome.invariant_failed = !pass;
    s << "invariance over " << prompts.size() << " prompts (" << total.positions
      << " positions): max logit diff " << total.max_abs_diff << (pass ? ", pass" : ", FAIL");
  } else if (opts.kind == "gradcheck") {
    TrainConfig cfg = TrainConfig::from_config(kv);
    cfg.seed = opts.seed;
    const auto problem = make_gradcheck_problem(static_cast<int>(base.vocab.base_size()),
                                                kv.get("examples", 20), opts.seed);
    const GradCheckResult r = gradient_check(problem, cfg);
    for (std::size_t i = 0; i < r.per_example.size(); ++i) {
      nlohmann::ordered_json j;
      j["example"] = i;
      j["max_rel_error"] = r.per_example[i];
      report.records.push_back(std::move(j));
    }
    const double threshold = kv.get("threshold", 1e-4);
    report.aggregate["eps"] = kGradCheckEps;
    report.aggregate["stencil"] = "four_point";
    report.aggregate["max_rel_error"] = r.max_rel_error;
    report.aggregate["max_rel_error_two_point"] = r.max_rel_error_two_point;
    report.aggregate["threshold"] = threshold;
    report.aggregate["pass"] = r.max_rel_error <= threshold;
    outcome.invariant_failed = r.max_rel_error > threshold;
    s << "gradcheck over " << r.per_example.size() << " examples: max relative error "
      << fmt("%.3e", r.max_rel_error) << (outcome.invariant_failed ? ", FAIL" : ", pass");
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown eval kind '" + opts.kind + "'");
  }

  write_file(opts.out, report.serialize());
  finish_manifest(m, outputs, manifest_path(opts.out));
  s << "\nreport: " << opts.out;
  outcome.summary = s.str();
  return outcome;
}

// ----------------------------------------------------------------------------
// gen and the prompt session

PromptSession::PromptSession(const fs::path& checkpoint, const fs::path& registry, std::uint64_t seed)
    : model_(attach_registry(load_model(checkpoint), NeologismRegistry::load(registry))), base_seed_(seed) {}

std::string PromptSession::generate(std::string_view prompt, const SampleOptions& options) const {
  const TokenSeq ids = chat_prompt(model_.vocab, prompt);
  return model_.vocab.decode(sample(model_.params, ids, options));
}

double PromptSession::logprob(std::string_view prompt, std::string_view response) const {
  return sequence_logprob(model_.params, chat_prompt(model_.vocab, prompt), chat_response(model_.vocab, response));
}

std::string PromptSession::repl_line(std::string_view line, bool& quit) {
  quit = false;
  const auto words = split_words(line);
  if (words.empty()) return "";
  if (words[0] == ":quit") {
    quit = true;
    return "";
  }
  if (words[0] == ":seed") {
    if (words.size() != 2) return "usage: :seed N";
    try {
      fixed_seed_ = std::stoull(std::string(words[1]));
    } catch (const std::exception&) {
      return "usage: :seed N";
    }
    return "seed fixed to " + std::string(words[1]);
  }
  SampleOptions so;
  so.seed = fixed_seed_ ? *fixed_seed_ : derive_seed(base_seed_, line_);
  ++line_;
  try {
    return generate(line, so);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kVocabulary) return std::string("error: ") + e.what();
    throw;
  }
}

CommandOutcome cmd_gen(const CommandOptions& opts) {
  require_option(opts.checkpoint, "checkpoint");
  require_option(opts.prompt, "prompt");
  const fs::path registry_file = registry_path(opts);
  const PromptSession session(opts.checkpoint, registry_file);
  SampleOptions so;
  so.seed = opts.seed;
  so.max_tokens = opts.max_tokens;
  so.temperature = opts.temperature;
  so.greedy = opts.greedy;
  const std::string text = session.generate(opts.prompt, so);
  if (!opts.out.empty()) {
    write_file(opts.out, text + "\n");
    RunManifest m;
    m.command = "gen";
    m.config = {{"prompt", opts.prompt},
                {"max_tokens", std::to_string(opts.max_tokens)},
                {"temperature", fmt("%.17g", opts.temperature)},
                {"greedy", opts.greedy ? "true" : "false"}};
    m.seed = opts.seed;
    add_input(m, opts.checkpoint);
    add_input(m, registry_file);
    finish_manifest(m, {opts.out}, manifest_path(opts.out));
  }
  return {text, false};
}

}  // namespace neo
