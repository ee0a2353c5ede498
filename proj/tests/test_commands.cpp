#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "neo/commands.hpp"
#include "neo/common.hpp"
#include "neo/eval.hpp"
#include "neo/io.hpp"

using namespace neo;
namespace fs = std::filesystem;

namespace {

// One tiny pretrained model shared by every case; each case gets its own
// registry so they stay independent.
struct Workspace {
  fs::path dir;
  fs::path checkpoint;
  fs::path pretrain_conf;

  Workspace() {
    dir = fs::temp_directory_path() / ("neo_commands_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    pretrain_conf = dir / "pretrain.conf";
    write_file(pretrain_conf,
               "stories = 400\nguesses = 150\nlayers = 1\nd_model = 16\nheads = 2\ncontext = 96\n"
               "batch_size = 8\nlearning_rate = 0.01\nwarmup_steps = 5\nmax_steps = 150\neval_every = 50\n"
               "patience = 2\n");
    checkpoint = dir / "base.neo";
    CommandOptions o;
    o.config = pretrain_conf.string();
    o.out = checkpoint.string();
    o.seed = 1;
    pretrain_summary = cmd_pretrain(o).summary;
  }
  ~Workspace() { fs::remove_all(dir); }

  fs::path path(const std::string& name) const { return dir / name; }

  fs::path conf(const std::string& name, const std::string& text) const {
    const auto p = path(name);
    write_file(p, text);
    return p;
  }

  std::string pretrain_summary;
};

Workspace& ws() {
  static Workspace w;
  return w;
}

CommandOptions dataset_opts(const std::string& kind, const fs::path& out, std::uint64_t seed,
                            const fs::path& conf = {}) {
  CommandOptions o;
  o.kind = kind;
  o.out = out.string();
  o.seed = seed;
  o.config = conf.string();
  o.checkpoint = ws().checkpoint.string();
  return o;
}

CommandOptions teach_opts(const fs::path& dataset, const std::string& surface, const fs::path& registry,
                          const fs::path& conf) {
  CommandOptions o;
  o.checkpoint = ws().checkpoint.string();
  o.dataset = dataset.string();
  o.surface = surface;
  o.registry = registry.string();
  o.config = conf.string();
  return o;
}

fs::path length_dataset() {
  const auto out = ws().path("length.jsonl");
  if (!fs::exists(out)) {
    const auto conf = ws().conf("dl.conf", "bucket = A\ninstructions = 30\n");
    cmd_dataset(dataset_opts("length", out, 3, conf));
  }
  return out;
}

fs::path teach_conf() { return ws().conf("teach.conf", "max_steps = 15\ninit_token = ensure\n"); }

void check_manifest(const fs::path& output, const fs::path& manifest = {}) {
  const auto m = RunManifest::parse(read_file(manifest.empty() ? manifest_path(output) : manifest));
  REQUIRE(m.outputs.contains(output.string()));
  for (const auto& [p, hash] : m.outputs) CHECK(sha256_file(p) == hash);
  for (const auto& [p, hash] : m.inputs) CHECK(sha256_file(p) == hash);
}

}  // namespace

TEST_CASE("pretrain writes a reproducible checkpoint") {
  auto& w = ws();
  CHECK(w.pretrain_summary.find("pretrained") != std::string::npos);
  for (const char* name : {"base.neo", "base.vocab", "base.corpus.txt", "base.neo.log.jsonl"})
    CHECK_MESSAGE(fs::exists(w.path(name)), name);
  check_manifest(w.checkpoint);

  const auto model = load_model(w.checkpoint);
  CHECK(model.params.shape.d_model == 16);
  CHECK(model.vocab.base_size() == model.vocab.size());

  CommandOptions o;
  o.config = w.pretrain_conf.string();
  // Same file name: the checkpoint records its vocabulary's name.
  fs::create_directories(w.path("rerun"));
  o.out = w.path("rerun/base.neo").string();
  o.seed = 1;
  cmd_pretrain(o);
  CHECK(read_file(w.path("rerun/base.neo")) == read_file(w.checkpoint));
  CHECK(read_file(w.path("rerun/base.corpus.txt")) == read_file(w.path("base.corpus.txt")));

  o.config.clear();
  CHECK_THROWS_AS(cmd_pretrain(o), Error);
}

TEST_CASE("dataset builders rerun byte-identically") {
  auto& w = ws();
  const auto first = length_dataset();
  const auto again = w.path("length_again.jsonl");
  cmd_dataset(dataset_opts("length", again, 3, w.path("dl.conf")));
  CHECK(read_file(first) == read_file(again));
  check_manifest(first);

  const auto div = w.path("div.jsonl");
  const auto dconf = w.conf("dd.conf", "instructions = 6\nk_max = 4\n");
  const auto summary = cmd_dataset(dataset_opts("diversity", div, 2, dconf)).summary;
  CHECK(summary.find("18 diversity pairs") != std::string::npos);
  CHECK(load_dataset(div).size() == 18);

  const auto qconf = w.conf("dq.conf", "instructions = 8\nsamples_per_instruction = 3\nmax_tokens = 20\n");
  const auto q1 = w.path("q1.jsonl"), q2 = w.path("q2.jsonl");
  cmd_dataset(dataset_opts("quality", q1, 5, qconf));
  cmd_dataset(dataset_opts("quality", q2, 5, qconf));
  CHECK(read_file(q1) == read_file(q2));
  for (const auto& r : load_dataset(q1)) CHECK(rule_based_score(r.prompt, r.chosen) > rule_based_score(r.prompt, r.rejected));

  CHECK_THROWS_AS(cmd_dataset(dataset_opts("speed", w.path("x.jsonl"), 1)), Error);
  const auto bad_bucket = w.conf("bad.conf", "bucket = C\n");
  CHECK_THROWS_AS(cmd_dataset(dataset_opts("length", w.path("x.jsonl"), 1, bad_bucket)), Error);
}

TEST_CASE("teach stores the row and leaves the checkpoint alone") {
  auto& w = ws();
  const auto ckpt_hash = sha256_file(w.checkpoint);
  const auto reg = w.path("teach_registry.jsonl");
  auto o = teach_opts(length_dataset(), "ensure_w", reg, teach_conf());
  const auto outcome = cmd_teach(o);
  CHECK_FALSE(outcome.invariant_failed);
  CHECK(outcome.summary.find("taught 'ensure_w'") != std::string::npos);
  CHECK(sha256_file(w.checkpoint) == ckpt_hash);

  const auto registry = NeologismRegistry::load(reg);
  REQUIRE(registry.entries().size() == 1);
  const auto* e = registry.find("ensure_w");
  REQUIRE(e != nullptr);
  CHECK(e->checkpoint_hash == ckpt_hash);
  CHECK(e->init_token == "ensure");
  check_manifest(reg, manifest_path(reg.string() + ".ensure_w"));

  // Same config and seed in a fresh registry: the same vector.
  const auto reg2 = w.path("teach_registry2.jsonl");
  cmd_teach(teach_opts(length_dataset(), "ensure_w", reg2, teach_conf()));
  CHECK(NeologismRegistry::load(reg2).find("ensure_w")->vector == e->vector);

  // Teaching the same surface again replaces the entry.
  cmd_teach(o);
  CHECK(NeologismRegistry::load(reg).entries().size() == 1);

  // The frozen model is unchanged with the neologism attached.
  CommandOptions ev;
  ev.kind = "invariance";
  ev.checkpoint = w.checkpoint.string();
  ev.registry = reg.string();
  ev.out = w.path("inv.jsonl").string();
  ev.config = w.conf("inv.conf", "prompts = 20\n").string();
  const auto inv = cmd_eval(ev);
  CHECK_FALSE(inv.invariant_failed);
  const auto rep = EvalReport::parse(read_file(ev.out));
  CHECK(rep.aggregate.at("pass").get<bool>());
  CHECK(rep.aggregate.at("max_abs_diff").get<double>() == 0.0);
  CHECK(rep.records.size() == 20);
  check_manifest(ev.out);

  auto missing = o;
  missing.surface.clear();
  CHECK_THROWS_AS(cmd_teach(missing), Error);
  auto wrong_surface = o;
  wrong_surface.surface = "other_w";  // the prompts hold ensure_w, not other_w
  CHECK_THROWS_AS(cmd_teach(wrong_surface), Error);
}

TEST_CASE("eval reports") {
  auto& w = ws();
  const auto reg = w.path("eval_registry.jsonl");
  cmd_teach(teach_opts(length_dataset(), "ensure_w", reg, teach_conf()));

  CommandOptions ev;
  ev.checkpoint = w.checkpoint.string();
  ev.registry = reg.string();
  ev.seed = 4;

  ev.kind = "length";
  ev.out = w.path("len_report.jsonl").string();
  ev.config = w.conf("el.conf", "bucket = A\n").string();
  cmd_eval(ev);
  auto rep = EvalReport::parse(read_file(ev.out));
  CHECK(rep.records.size() == 100);
  int sat = 0;
  for (const auto& r : rep.records)
    if (r.at("condition") == "neologism") sat += r.at("satisfied").get<bool>();
  CHECK(rep.aggregate.at("neologism_rate").get<double>() == doctest::Approx(sat / 50.0));
  const auto first_report = read_file(ev.out);
  cmd_eval(ev);
  CHECK(read_file(ev.out) == first_report);

  ev.kind = "gradcheck";
  ev.out = w.path("gc.jsonl").string();
  ev.config = w.conf("gc.conf", "examples = 4\n").string();
  const auto gc = cmd_eval(ev);
  CHECK_FALSE(gc.invariant_failed);
  CHECK(EvalReport::parse(read_file(ev.out)).aggregate.at("max_rel_error").get<double>() <= 1e-4);

  ev.kind = "diversity";
  ev.out = w.path("div.jsonl").string();
  ev.config.clear();
  ev.surface = "ensure_w";  // any registered neologism will do for plumbing
  ev.config = w.conf("ed.conf", "samples = 20\n").string();
  cmd_eval(ev);
  const auto plot = read_file(ev.out + ".plot.dat");
  CHECK(plot.find("# uniform\n") == 0);
  CHECK(plot.find("\n10 0.692054\n") != std::string::npos);
  check_manifest(ev.out);

  ev.surface = "diverse_w";  // never taught
  CHECK_THROWS_AS(cmd_eval(ev), Error);
  ev.kind = "speed";
  CHECK_THROWS_AS(cmd_eval(ev), Error);
}

TEST_CASE("generation and the prompt session") {
  auto& w = ws();
  const auto reg = w.path("gen_registry.jsonl");
  cmd_teach(teach_opts(length_dataset(), "ensure_w", reg, teach_conf()));

  CommandOptions g;
  g.checkpoint = w.checkpoint.string();
  g.registry = reg.string();
  g.prompt = "tell me a story ensure_w that the response is between 20-30 words .";
  g.seed = 8;
  g.max_tokens = 20;
  const auto a = cmd_gen(g).summary;
  CHECK(cmd_gen(g).summary == a);
  g.out = w.path("gen.txt").string();
  cmd_gen(g);
  CHECK(read_file(g.out) == a + "\n");
  check_manifest(g.out);

  g.prompt = "tell me a zyzzyva";
  CHECK_THROWS_AS(cmd_gen(g), Error);

  PromptSession s(w.checkpoint, reg, 3);
  CHECK(s.model().vocab.find("ensure_w").has_value());
  bool quit = false;
  CHECK(s.repl_line(":seed 5", quit) == "seed fixed to 5");
  const auto r1 = s.repl_line("tell me a story", quit);
  CHECK(s.repl_line("tell me a story", quit) == r1);
  CHECK_FALSE(quit);
  CHECK(s.repl_line("tell me a zyzzyva", quit).rfind("error: ", 0) == 0);
  CHECK(s.repl_line(":seed x", quit) == "usage: :seed N");
  CHECK(s.repl_line("", quit).empty());
  s.repl_line(":quit", quit);
  CHECK(quit);

  // The neologism can never be produced.
  for (int i = 0; i < 20; ++i) {
    SampleOptions so;
    so.seed = static_cast<std::uint64_t>(i);
    so.max_tokens = 30;
    const auto text = s.generate("tell me a story ensure_w that the response is between 20-30 words .", so);
    CHECK(text.find("ensure_w") == std::string::npos);
  }
  SampleOptions so;
  so.seed = 1;
  so.max_tokens = 10;
  const auto reply = s.generate("tell me a story", so);
  if (!reply.empty()) CHECK(std::isfinite(s.logprob("tell me a story", reply)));
  CHECK_THROWS_AS(s.logprob("tell me a story", "ensure_w"), Error);
}

TEST_CASE("registries bound to another checkpoint are refused") {
  auto& w = ws();
  const auto reg = w.path("foreign_registry.jsonl");
  cmd_teach(teach_opts(length_dataset(), "ensure_w", reg, teach_conf()));
  auto text = read_file(reg);
  const auto hash = sha256_file(w.checkpoint);
  const auto at = text.find(hash);
  REQUIRE(at != std::string::npos);
  text.replace(at, hash.size(), std::string(hash.size(), '0'));
  write_file(reg, text);
  CHECK_THROWS_AS(PromptSession(w.checkpoint, reg), Error);
}
