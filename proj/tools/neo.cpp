// Command-line front end. Talks to the library only through neo.h.

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "neo/neo.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInvariant = 2;

struct Flags {
  std::string checkpoint, registry, dataset, config, out, surface, prompt, kind;
  std::string seed;
  int max_tokens = 64;
  double temperature = 1.0;
  bool greedy = false;
};

int report(neo_status status, char* summary) {
  if (summary) {
    if (*summary) std::cout << summary << '\n';
    neo_free_string(summary);
  }
  if (status == NEO_OK) return kExitOk;
  if (status == NEO_ERR_INVARIANT) {
    std::cerr << "invariant failure\n";
    return kExitInvariant;
  }
  std::cerr << "error: " << neo_last_error() << '\n';
  return kExitUsage;
}

// --seed wins; NEO_SEED is the fallback; otherwise the library default.
std::string resolve_seed(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("NEO_SEED"); env && *env) return env;
  return "";
}

int run_command(const std::string& command, const Flags& f) {
  neo_options* opts = nullptr;
  if (neo_options_create(&opts) != NEO_OK) return report(NEO_ERR_INTERNAL, nullptr);
  const std::vector<std::pair<const char*, std::string>> values = {
      {"checkpoint", f.checkpoint}, {"registry", f.registry}, {"dataset", f.dataset},
      {"config", f.config},         {"out", f.out},           {"kind", f.kind},
      {"surface", f.surface},       {"prompt", f.prompt},     {"seed", resolve_seed(f.seed)},
  };
  neo_status status = NEO_OK;
  for (const auto& [key, value] : values) {
    if (!value.empty() && (status = neo_options_set(opts, key, value.c_str())) != NEO_OK) break;
  }
  if (status == NEO_OK && command == "gen") {
    const std::string max_tokens = std::to_string(f.max_tokens);
    const std::string temperature = std::to_string(f.temperature);
    status = neo_options_set(opts, "max_tokens", max_tokens.c_str());
    if (status == NEO_OK) status = neo_options_set(opts, "temperature", temperature.c_str());
    if (status == NEO_OK) status = neo_options_set(opts, "greedy", f.greedy ? "1" : "0");
  }
  char* summary = nullptr;
  if (status == NEO_OK) status = neo_run(command.c_str(), opts, &summary);
  neo_options_destroy(opts);
  return report(status, summary);
}

int run_repl(const Flags& f) {
  std::uint64_t seed = 0;
  if (const std::string s = resolve_seed(f.seed); !s.empty()) {
    try {
      seed = std::stoull(s);
    } catch (const std::exception&) {
      std::cerr << "error: invalid seed '" << s << "'\n";
      return kExitUsage;
    }
  }
  neo_session* session = nullptr;
  const neo_status status =
      neo_session_open(f.checkpoint.c_str(), f.registry.empty() ? nullptr : f.registry.c_str(), seed, &session);
  if (status != NEO_OK) return report(status, nullptr);
  const bool interactive = isatty(STDIN_FILENO);
  std::string line;
  int code = kExitOk;
  while (true) {
    if (interactive) std::cout << "> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    char* reply = nullptr;
    int quit = 0;
    const neo_status s = neo_session_repl_line(session, line.c_str(), &reply, &quit);
    if (s != NEO_OK) {
      code = report(s, nullptr);
      break;
    }
    if (*reply) std::cout << reply << '\n';
    neo_free_string(reply);
    if (quit) break;
  }
  neo_session_close(session);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teach new words to a frozen language model."};
  app.set_version_flag("--version", std::string(neo_version()));
  app.require_subcommand(1);
  Flags f;

  auto seed_opt = [&](CLI::App* sub) {
    sub->add_option("--seed", f.seed, "Random seed (falls back to $NEO_SEED)");
  };

  auto* pretrain = app.add_subcommand("pretrain", "Generate the synthetic corpus and pretrain a base model");
  pretrain->add_option("--config", f.config, "Corpus and model spec (key=value)")->required();
  pretrain->add_option("--out", f.out, "Output checkpoint path")->required();
  seed_opt(pretrain);

  auto* dataset = app.add_subcommand("dataset", "Build a preference dataset");
  dataset->add_option("kind", f.kind, "length | diversity | quality")->required();
  dataset->add_option("--out", f.out, "Output dataset path")->required();
  dataset->add_option("--config", f.config, "Builder settings (key=value)");
  dataset->add_option("--checkpoint", f.checkpoint, "Base model (quality pairs sample from it)");
  dataset->add_option("--surface", f.surface, "Neologism surface form");
  seed_opt(dataset);

  auto* teach = app.add_subcommand("teach", "Learn one neologism embedding");
  teach->add_option("--checkpoint", f.checkpoint, "Frozen base checkpoint")->required();
  teach->add_option("--dataset", f.dataset, "Preference dataset")->required();
  teach->add_option("--surface", f.surface, "Neologism surface form")->required();
  teach->add_option("--config", f.config, "Training config (key=value)");
  teach->add_option("--registry", f.registry, "Neologism registry (default: next to the checkpoint)");
  seed_opt(teach);

  auto* eval = app.add_subcommand("eval", "Run an evaluation and write a report");
  eval->add_option("kind", f.kind, "length | diversity | quality | invariance | gradcheck")->required();
  eval->add_option("--checkpoint", f.checkpoint, "Base checkpoint")->required();
  eval->add_option("--out", f.out, "Report path")->required();
  eval->add_option("--registry", f.registry, "Neologism registry");
  eval->add_option("--config", f.config, "Evaluation settings (key=value)");
  eval->add_option("--surface", f.surface, "Neologism under test");
  seed_opt(eval);

  auto* gen = app.add_subcommand("gen", "Sample one response");
  gen->add_option("--checkpoint", f.checkpoint, "Base checkpoint")->required();
  gen->add_option("--prompt", f.prompt, "Prompt text")->required();
  gen->add_option("--registry", f.registry, "Neologism registry");
  gen->add_option("--out", f.out, "Also write the response here, with a manifest");
  gen->add_option("--max-tokens", f.max_tokens, "Maximum response tokens")->check(CLI::NonNegativeNumber);
  gen->add_option("--temperature", f.temperature, "Sampling temperature")->check(CLI::PositiveNumber);
  gen->add_flag("--greedy", f.greedy, "Argmax decoding");
  seed_opt(gen);

  auto* repl = app.add_subcommand("repl", "Interactive prompt (:seed N, :quit)");
  repl->add_option("--checkpoint", f.checkpoint, "Base checkpoint")->required();
  repl->add_option("--registry", f.registry, "Neologism registry");
  seed_opt(repl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (repl->parsed()) return run_repl(f);
  for (auto* sub : {pretrain, dataset, teach, eval, gen}) {
    if (sub->parsed()) return run_command(sub->get_name(), f);
  }
  return kExitUsage;
}
