#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "neo/common.hpp"
#include "neo/datasets.hpp"
#include "neo/model.hpp"

using namespace neo;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Independent tokenization: whitespace runs separate words.
std::size_t count_words(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

std::pair<std::string, std::string> split_line(const std::string& line) {
  const auto at = line.find(" => ");
  REQUIRE(at != std::string::npos);
  return {line.substr(0, at), line.substr(at + 4)};
}

bool is_guess_prompt(const std::string& prompt) {
  return prompt.find("an integer between 1 and 9") != std::string::npos;
}

std::vector<std::string> first_n(const std::vector<std::string>& v, std::size_t n) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

}  // namespace

TEST_CASE("corpus is deterministic per seed") {
  CorpusSpec spec;
  spec.stories = 300;
  spec.guesses = 100;
  const auto a = gen_pretraining_corpus(spec, 11);
  CHECK(a == gen_pretraining_corpus(spec, 11));
  CHECK(a != gen_pretraining_corpus(spec, 12));
  CHECK(lines_of(a).size() == 400);
}

TEST_CASE("plain guesses follow the configured distribution") {
  CorpusSpec spec;
  spec.stories = 0;
  spec.guesses = 13000;
  const auto corpus = gen_pretraining_corpus(spec, 5);
  const std::regex digit(R"(^\{ number : ([1-9]) \}$)");
  std::array<int, 9> counts{};
  int total = 0;
  for (const auto& line : lines_of(corpus)) {
    const auto [prompt, response] = split_line(line);
    REQUIRE(is_guess_prompt(prompt));
    if (prompt.find(kSurpriseCue) != std::string::npos) continue;
    std::smatch m;
    if (!std::regex_match(response, m, digit)) continue;  // refusal
    ++counts[static_cast<std::size_t>(m[1].str()[0] - '1')];
    ++total;
  }
  REQUIRE(total >= 10000);
  const double other = 0.2 / 7.0;
  const std::array<double, 9> expected{other, other, other, other, 0.55, other, 0.25, other, other};
  for (std::size_t d = 0; d < 9; ++d) {
    INFO("digit " << d + 1);
    CHECK(std::abs(static_cast<double>(counts[d]) / total - expected[d]) <= 0.02);
  }
}

TEST_CASE("story responses are mostly short") {
  CorpusSpec spec;
  spec.stories = 3000;
  spec.guesses = 0;
  std::map<std::size_t, int> hist;
  int refusals = 0;
  for (const auto& line : lines_of(gen_pretraining_corpus(spec, 3))) {
    const auto [prompt, response] = split_line(line);
    if (response.find(kRefusalMarker) != std::string::npos) {
      ++refusals;
      continue;
    }
    ++hist[count_words(response)];
  }
  const auto mode = std::max_element(hist.begin(), hist.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; })->first;
  CHECK(mode >= 5);
  CHECK(mode <= 15);
  CHECK(std::abs(refusals / 3000.0 - 0.10) < 0.02);
  // Every length the generator emits comes from one of the three ranges.
  for (const auto& [len, n] : hist) {
    const bool ok = (len >= 5 && len <= 15) || (len >= 18 && len <= 32) || (len >= 38 && len <= 62);
    CHECK_MESSAGE(ok, "length " << len);
  }
}

TEST_CASE("held-out instructions never reach the corpus") {
  CorpusSpec spec;
  spec.stories = 4000;
  spec.guesses = 0;
  const auto split = split_instructions(spec.holdout_instructions, 0);
  REQUIRE(split.held_out.size() == 50);
  const std::set<std::string> held(split.held_out.begin(), split.held_out.end());
  const std::set<std::string> train(split.train.begin(), split.train.end());
  CHECK(held.size() + train.size() == story_instructions().size());
  for (const auto& h : held) CHECK(!train.contains(h));

  auto all = story_instructions();
  // Longest instruction that prefixes the prompt identifies it.
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  for (const auto& line : lines_of(gen_pretraining_corpus(spec, 9))) {
    const auto prompt = split_line(line).first;
    const auto it = std::find_if(all.begin(), all.end(), [&](const std::string& ins) {
      return prompt.rfind(ins, 0) == 0 && (prompt.size() == ins.size() || prompt[ins.size()] == ' ');
    });
    REQUIRE(it != all.end());
    REQUIRE_MESSAGE(!held.contains(*it), *it);
  }
}

TEST_CASE("corpus spec validation") {
  CorpusSpec spec;
  spec.stories = 0;
  spec.guesses = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.guess_probs[0] += 0.01;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.story_refusal = 1.5;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = {};
  spec.short_max = 20;  // overlaps the long range
  CHECK_THROWS_AS(spec.validate(), Error);
  CHECK_NOTHROW(CorpusSpec{}.validate());
}

TEST_CASE("story text has exactly the requested word count") {
  Rng rng(4);
  for (int n : {1, 2, 5, 17, 60}) {
    const auto s = story_text(n, rng);
    CHECK(count_words(s) == static_cast<std::size_t>(n));
    CHECK(word_count(s) == static_cast<std::size_t>(n));
  }
  CHECK_THROWS_AS(story_text(0, rng), Error);
  CHECK(word_count("a b  c") == 3);
  CHECK(word_count("") == 0);
}

TEST_CASE("length pairs") {
  const auto ins = first_n(split_instructions(50, 0).train, 60);
  for (const LengthBucket& bucket : {kBucketA, kBucketB}) {
    const auto recs = build_length_pairs(ins, bucket, "ensure_w", 7);
    REQUIRE(recs.size() == ins.size());
    for (const auto& r : recs) {
      const auto c = count_words(r.chosen), j = count_words(r.rejected);
      CHECK(bucket.contains(c));
      CHECK(j >= 5);
      CHECK(static_cast<int>(j) <= bucket.lo - 5);
      CHECK(c >= j + 5);
      CHECK(count_words(r.prompt) == word_count(r.prompt));
      const auto words = split_words(r.prompt);
      CHECK(std::count(words.begin(), words.end(), "ensure_w") == 1);
      CHECK(r.prompt.find(bucket.label()) != std::string::npos);
    }
    CHECK(recs == build_length_pairs(ins, bucket, "ensure_w", 7));
    CHECK(recs != build_length_pairs(ins, bucket, "ensure_w", 8));
  }
  CHECK_THROWS_AS(build_length_pairs(ins, LengthBucket{30, 40}, "ensure_w", 1), Error);
  // Too long for the context: skipped, not truncated.
  CHECK(build_length_pairs(ins, kBucketB, "ensure_w", 1, 40).empty());
}

TEST_CASE("diversity pairs") {
  std::vector<std::string> ins;
  for (int i = 0; i < 4; ++i)
    for (const auto& g : guess_instructions()) ins.push_back(g);
  const auto recs = build_diversity_pairs(ins, "diverse_w", 5, 2);
  REQUIRE(recs.size() == ins.size() * 4);
  std::set<std::string> chosen;
  for (std::size_t i = 0; i < ins.size(); ++i) {
    std::set<std::string> seen;
    for (int k = 2; k <= 5; ++k) {
      const auto& r = recs[i * 4 + static_cast<std::size_t>(k - 2)];
      CHECK(r.chosen != r.rejected);
      CHECK(r.prompt == diversity_prompt(ins[i], "diverse_w", k));
      // Consecutive pairs chain through one permutation.
      if (k > 2) CHECK(r.rejected == recs[i * 4 + static_cast<std::size_t>(k - 3)].chosen);
      seen.insert(r.rejected);
      seen.insert(r.chosen);
      chosen.insert(r.chosen);
    }
    CHECK(seen.size() == 5);
  }
  CHECK(chosen.size() == 9);
  CHECK(build_diversity_pairs(ins, "diverse_w", 20, 2).size() == ins.size() * 8);
  CHECK_THROWS_AS(build_diversity_pairs(ins, "diverse_w", 1, 2), Error);
  CHECK(guess_response(3) == "{ number : 3 }");
  CHECK_THROWS_AS(guess_response(0), Error);
  CHECK(ordinal(2) == "2nd");
  CHECK(ordinal(3) == "3rd");
  CHECK(ordinal(4) == "4th");
}

TEST_CASE("rule-based scorer") {
  CHECK(rule_based_score("p", "sorry i cannot help with that .") == 1);
  CHECK(rule_based_score("p", "a b c") == 2);
  std::string text;
  for (int i = 0; i < 25; ++i) text += "w" + std::to_string(i) + " ";
  CHECK(rule_based_score("p", text) == 4);
  for (int i = 0; i < 25; ++i) text += "w" + std::to_string(i) + " ";  // repeats add nothing
  CHECK(rule_based_score("p", text) == 4);
  for (int i = 25; i < 80; ++i) text += "w" + std::to_string(i) + " ";
  CHECK(rule_based_score("p", text) == 5);
}

TEST_CASE("quality pairs") {
  CorpusSpec spec;
  spec.stories = 200;
  spec.guesses = 50;
  const auto ins = first_n(split_instructions(50, 0).train, 12);
  std::string text = gen_pretraining_corpus(spec, 1);
  for (const auto& i : ins) text += i + " => ok\n";
  const Vocabulary vocab = Vocabulary::build(text);
  ModelShape shape;
  shape.layers = 1;
  shape.d_model = 16;
  shape.heads = 2;
  shape.context = 96;
  shape.vocab_size = shape.base_size = static_cast<int>(vocab.size());
  const auto model = ModelParams<float>::random(shape, 3);
  QualityPairOptions opt;
  opt.samples_per_instruction = 2;
  opt.max_tokens = 12;

  SUBCASE("constant scores are all ties") {
    const Scorer flat = [](std::string_view, std::string_view) { return 3; };
    CHECK(build_quality_pairs(ins, model, vocab, flat, "good_w", 1, opt).empty());
  }
  SUBCASE("best and worst are kept") {
    std::vector<std::string> seen;
    int calls = 0;
    const Scorer alt = [&](std::string_view, std::string_view r) {
      seen.emplace_back(r);
      return (calls++ % 2) ? 5 : 3;
    };
    const auto recs = build_quality_pairs(ins, model, vocab, alt, "good_w", 1, opt);
    REQUIRE(seen.size() == ins.size() * 2);
    REQUIRE(recs.size() == ins.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      CHECK(recs[i].rejected == seen[2 * i]);
      CHECK(recs[i].chosen == seen[2 * i + 1]);
      CHECK(recs[i].tag == "quality:5-3");
      CHECK(recs[i].prompt == quality_prompt(ins[i], "you think is", "good_w"));
    }
  }
  SUBCASE("rule scorer orders every pair") {
    opt.samples_per_instruction = 5;
    opt.max_tokens = 40;
    const auto recs = build_quality_pairs(ins, model, vocab, rule_based_score, "good_w", 4, opt);
    for (const auto& r : recs) CHECK(rule_based_score(r.prompt, r.chosen) > rule_based_score(r.prompt, r.rejected));
    CHECK(recs == build_quality_pairs(ins, model, vocab, rule_based_score, "good_w", 4, opt));
  }
  opt.samples_per_instruction = 1;
  CHECK_THROWS_AS(build_quality_pairs(ins, model, vocab, rule_based_score, "good_w", 1, opt), Error);
}

TEST_CASE("dataset files round trip") {
  const auto recs = build_length_pairs(first_n(split_instructions(50, 0).train, 5), kBucketA, "ensure_w", 1);
  auto text = serialize_dataset(recs);
  CHECK(parse_dataset(text) == recs);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);

  const auto path = std::filesystem::temp_directory_path() / "neo_test_dataset.jsonl";
  save_dataset(path, recs);
  CHECK(load_dataset(path) == recs);
  std::filesystem::remove(path);

  auto bad = recs;
  bad[2].rejected = bad[2].chosen;
  CHECK_THROWS_AS(parse_dataset(serialize_dataset(bad)), Error);
  CHECK_THROWS_AS(parse_dataset("{\"prompt\": 3}\n"), Error);
  CHECK_THROWS_AS(parse_dataset("not json\n"), Error);
  CHECK_THROWS_AS(load_dataset("/nonexistent/neo.jsonl"), Error);
}

TEST_CASE("encoded examples respect the neologism invariants") {
  const auto ins = first_n(split_instructions(50, 0).train, 10);
  const auto recs = build_length_pairs(ins, kBucketA, "ensure_w", 1);
  std::string text;
  for (const auto& r : recs) {
    for (auto word : split_words(r.prompt))
      if (word != "ensure_w") text += std::string(word) + " ";
    text += r.chosen + " " + r.rejected + "\n";
  }
  const auto base = Vocabulary::build(text + "=>\n");
  const auto [vocab, w] = base.add_neologism("ensure_w");
  const auto ds = encode_dataset(vocab, recs, w);
  REQUIRE(ds.size() == recs.size());
  for (const auto& ex : ds) {
    CHECK(ex.prompt.front() == Vocabulary::kBos);
    CHECK(std::count(ex.prompt.begin(), ex.prompt.end(), w) == 1);
    CHECK(ex.chosen.back() == Vocabulary::kEos);
    CHECK(ex.rejected.back() == Vocabulary::kEos);
    for (TokenId t : ex.chosen) CHECK(!vocab.is_neologism(t));
    for (TokenId t : ex.rejected) CHECK(!vocab.is_neologism(t));
  }
  CHECK(response_text(vocab, ds[0].chosen) == recs[0].chosen);

  auto twice = recs[0];
  twice.prompt += " ensure_w";
  CHECK_THROWS_AS(encode_example(vocab, twice, w), Error);
  auto none = recs[0];
  none.prompt = ins[0];
  CHECK_THROWS_AS(encode_example(vocab, none, w), Error);
  auto leaked = recs[0];
  leaked.chosen += " ensure_w";
  CHECK_THROWS_AS(encode_example(vocab, leaked, w), Error);
  auto same = recs[0];
  same.rejected = same.chosen;
  CHECK_THROWS_AS(encode_example(vocab, same, w), Error);
}
