#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "alignkit/collate.h"
#include "alignkit/data.h"
#include "alignkit/errors.h"
#include "alignkit/rng.h"
#include "alignkit/tokenizer.h"
#include "json.hpp"
#include "testutil.h"

using namespace alignkit;

namespace {

std::string hh_line(const std::string& prompt_body, const std::string& chosen,
                    const std::string& rejected) {
    nlohmann::json obj;
    obj["chosen"] = prompt_body + "\n\nAssistant:" + chosen;
    obj["rejected"] = prompt_body + "\n\nAssistant:" + rejected;
    return obj.dump();
}

PreferenceRecord make_record(std::string prompt, std::string chosen, std::string rejected,
                             int64_t source_index = 0) {
    return {std::move(prompt), std::move(chosen), std::move(rejected), source_index};
}

}  // namespace

TEST_CASE("tokenize maps bytes to ids and back") {
    CHECK(tokenize("Hi") == std::vector<int>{72, 105});
    CHECK(tokenize("").empty());
    // Multi-byte UTF-8 stays byte-level: e-acute is C3 A9.
    CHECK(tokenize("\xc3\xa9") == std::vector<int>{0xc3, 0xa9});
    CHECK(detokenize({72, 105}) == "Hi");
}

TEST_CASE("detokenize drops special ids") {
    CHECK(detokenize({kBosId, 72, 105, kEosId, kPadId}) == "Hi");
    CHECK(detokenize({kPadId, kPadId}).empty());
}

TEST_CASE("tokenize round-trips arbitrary byte strings") {
    Rng rng(411);
    for (int trial = 0; trial < 200; ++trial) {
        size_t len = rng.below(64);
        std::string text;
        for (size_t i = 0; i < len; ++i) {
            text.push_back(static_cast<char>(static_cast<unsigned char>(rng.below(256))));
        }
        std::vector<int> ids = tokenize(text);
        REQUIRE(ids.size() == text.size());
        for (int id : ids) {
            CHECK(id >= 0);
            CHECK(id < 256);
        }
        CHECK(detokenize(ids) == text);
    }
}

TEST_CASE("parse_hh_record splits both transcripts at the last marker") {
    std::string line = hh_line("\n\nHuman: How do I bake bread?",
                               " Start with flour and yeast.", " Figure it out.");
    PreferenceRecord record = parse_hh_record(line, 7);
    CHECK(record.prompt == "\n\nHuman: How do I bake bread?\n\nAssistant:");
    CHECK(record.chosen == " Start with flour and yeast.");
    CHECK(record.rejected == " Figure it out.");
    CHECK(record.source_index == 7);
}

TEST_CASE("parse_hh_record keeps earlier turns in the prompt") {
    std::string body = "\n\nHuman: Hi\n\nAssistant: Hello.\n\nHuman: Bake bread?";
    PreferenceRecord record = parse_hh_record(hh_line(body, " Sure.", " No."));
    CHECK(record.prompt == body + "\n\nAssistant:");
    CHECK(record.chosen == " Sure.");
}

TEST_CASE("parse_hh_record error kinds") {
    SUBCASE("invalid JSON is a schema error") {
        CHECK_THROWS_AS(parse_hh_record("not json at all"), RecordError);
        try {
            parse_hh_record("{broken");
        } catch (const RecordError& e) {
            CHECK(e.kind == RecordError::Kind::Schema);
        }
    }
    SUBCASE("non-object JSON is a schema error") {
        try {
            parse_hh_record("[1, 2]");
            FAIL("expected RecordError");
        } catch (const RecordError& e) {
            CHECK(e.kind == RecordError::Kind::Schema);
        }
    }
    SUBCASE("missing field is a schema error") {
        nlohmann::json obj;
        obj["chosen"] = "\n\nAssistant: x";
        try {
            parse_hh_record(obj.dump());
            FAIL("expected RecordError");
        } catch (const RecordError& e) {
            CHECK(e.kind == RecordError::Kind::Schema);
            CHECK(std::string(e.what()).find("rejected") != std::string::npos);
        }
    }
    SUBCASE("non-string field is a schema error") {
        nlohmann::json obj;
        obj["chosen"] = 3;
        obj["rejected"] = "\n\nAssistant: x";
        try {
            parse_hh_record(obj.dump());
            FAIL("expected RecordError");
        } catch (const RecordError& e) {
            CHECK(e.kind == RecordError::Kind::Schema);
        }
    }
    SUBCASE("missing marker is a marker error") {
        nlohmann::json obj;
        obj["chosen"] = "no marker here";
        obj["rejected"] = "\n\nAssistant: fine";
        try {
            parse_hh_record(obj.dump());
            FAIL("expected RecordError");
        } catch (const RecordError& e) {
            CHECK(e.kind == RecordError::Kind::Marker);
            CHECK(std::string(e.what()).find("chosen") != std::string::npos);
        }
    }
    SUBCASE("prompt mismatch is a consistency error") {
        nlohmann::json obj;
        obj["chosen"] = "\n\nHuman: A\n\nAssistant: x";
        obj["rejected"] = "\n\nHuman: B\n\nAssistant: y";
        try {
            parse_hh_record(obj.dump());
            FAIL("expected RecordError");
        } catch (const RecordError& e) {
            CHECK(e.kind == RecordError::Kind::Consistency);
        }
    }
}

TEST_CASE("load_jsonl keeps order and tallies skips by kind") {
    testutil::TempDir dir("data");
    std::string contents;
    contents += hh_line("\n\nHuman: One", " first", " other") + "\n";
    contents += "{broken json\n";
    contents += hh_line("\n\nHuman: Three", " third", " other") + "\n";
    contents += "{\"chosen\": \"\\n\\nAssistant: x\"}\n";                                  // missing field
    contents += "{\"chosen\": \"plain\", \"rejected\": \"\\n\\nAssistant: y\"}\n";         // no marker
    contents += hh_line("\n\nHuman: Six", " sixth", " other") + "\n";
    std::string path = dir.file("train.jsonl");
    testutil::write_file(path, contents);

    auto [records, stats] = load_jsonl(path);
    REQUIRE(records.size() == 3);
    CHECK(records[0].source_index == 1);
    CHECK(records[1].source_index == 3);
    CHECK(records[2].source_index == 6);
    CHECK(records[0].chosen == " first");
    CHECK(records[2].chosen == " sixth");
    CHECK(stats.loaded == 3);
    CHECK(stats.skipped == 3);
    CHECK(stats.reasons.at("schema") == 2);
    CHECK(stats.reasons.at("marker") == 1);
    CHECK(stats.reasons.count("consistency") == 0);
}

TEST_CASE("load_jsonl resolves a directory through the split name") {
    testutil::TempDir dir("data");
    testutil::write_file(dir.file("test.jsonl"), hh_line("\n\nHuman: Q", " a", " b") + "\n");

    auto [records, stats] = load_jsonl(dir.path.string(), "test");
    CHECK(records.size() == 1);
    CHECK(stats.skipped == 0);

    CHECK_THROWS_AS(load_jsonl(dir.path.string(), ""), ContractError);
    CHECK_THROWS_AS(load_jsonl(dir.path.string(), "validation"), IoError);
    CHECK_THROWS_AS(load_jsonl(dir.file("absent.jsonl")), IoError);
}

TEST_CASE("load_jsonl handles CRLF and empty files") {
    testutil::TempDir dir("data");
    testutil::write_file(dir.file("crlf.jsonl"), hh_line("\n\nHuman: Q", " a", " b") + "\r\n");
    auto [records, stats] = load_jsonl(dir.file("crlf.jsonl"));
    CHECK(records.size() == 1);
    CHECK(records[0].chosen == " a");

    testutil::write_file(dir.file("empty.jsonl"), "");
    auto [none, empty_stats] = load_jsonl(dir.file("empty.jsonl"));
    CHECK(none.empty());
    CHECK(empty_stats.loaded == 0);
    CHECK(empty_stats.skipped == 0);
}

TEST_CASE("contains_whole_word respects boundaries and case") {
    CHECK(contains_whole_word("how to kill a process", "kill"));
    CHECK(contains_whole_word("KILL the lights", "kill"));
    CHECK(contains_whole_word("kill", "kill"));
    CHECK(contains_whole_word("a kill-switch", "kill"));      // '-' is a boundary
    CHECK(contains_whole_word("kill9 handler", "kill"));      // digits are boundaries
    CHECK_FALSE(contains_whole_word("what skill to learn", "kill"));
    CHECK_FALSE(contains_whole_word("overkill", "kill"));
    CHECK_FALSE(contains_whole_word("killing time", "kill"));
    CHECK_FALSE(contains_whole_word("", "kill"));
    CHECK_FALSE(contains_whole_word("short", "a longer word"));
}

TEST_CASE("filter_harmful_prompts selects whole-word matches in order") {
    std::vector<PreferenceRecord> records = {
        make_record("\n\nHuman: How do I kill a process?\n\nAssistant:", " a", " b", 1),
        make_record("\n\nHuman: What skill should I learn?\n\nAssistant:", " a", " b", 2),
        make_record("\n\nHuman: How to MURDER time on a flight?\n\nAssistant:", " a", " b", 3),
        make_record("\n\nHuman: Recipe for bread?\n\nAssistant:", " a", " b", 4),
    };
    auto harmful = filter_harmful_prompts(records, {"kill", "murder"});
    REQUIRE(harmful.size() == 2);
    CHECK(harmful[0].source_index == 1);
    CHECK(harmful[1].source_index == 3);
    CHECK(harmful[0].category == "harmless-eval");
    CHECK(harmful[0].text == records[0].prompt);

    auto benign = select_benign_prompts(records, {"kill", "murder"});
    REQUIRE(benign.size() == 2);
    CHECK(benign[0].source_index == 2);
    CHECK(benign[1].source_index == 4);
    CHECK(benign[0].category == "helpful-eval");

    CHECK_THROWS_AS(filter_harmful_prompts(records, {}), ContractError);
    CHECK_THROWS_AS(select_benign_prompts(records, {}), ContractError);
}

TEST_CASE("adding keywords only grows the harmful selection") {
    const char* pool[] = {"kill", "bomb", "poison", "bread", "travel", "music", "code"};
    Rng rng(52);
    std::vector<PreferenceRecord> records;
    for (int i = 0; i < 120; ++i) {
        std::string prompt = "\n\nHuman:";
        size_t words = 1 + rng.below(6);
        for (size_t w = 0; w < words; ++w) {
            prompt += " " + std::string(pool[rng.below(7)]);
        }
        prompt += "?\n\nAssistant:";
        records.push_back(make_record(prompt, " a", " b", i + 1));
    }

    auto selected_indices = [](const std::vector<EvalPrompt>& prompts) {
        std::set<int64_t> out;
        for (const auto& p : prompts) out.insert(p.source_index);
        return out;
    };
    std::set<int64_t> small = selected_indices(filter_harmful_prompts(records, {"kill"}));
    std::set<int64_t> large =
        selected_indices(filter_harmful_prompts(records, {"kill", "bomb", "poison"}));
    CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));

    // Harmful and benign selections partition the corpus.
    auto benign = selected_indices(select_benign_prompts(records, {"kill", "bomb", "poison"}));
    CHECK(large.size() + benign.size() == records.size());
    for (int64_t idx : large) CHECK(benign.count(idx) == 0);
}

TEST_CASE("sample_subset keeps order and is deterministic") {
    std::vector<int> population(200);
    for (int i = 0; i < 200; ++i) population[i] = i;

    std::vector<int> sample = sample_subset(population, 50, 99);
    REQUIRE(sample.size() == 50);
    CHECK(std::is_sorted(sample.begin(), sample.end()));
    CHECK(std::adjacent_find(sample.begin(), sample.end()) == sample.end());
    CHECK(sample == sample_subset(population, 50, 99));
    CHECK(sample != sample_subset(population, 50, 100));

    CHECK(sample_subset(population, 200, 1) == population);
    CHECK(sample_subset(population, 0, 1).empty());
    CHECK_THROWS_AS(sample_subset(population, 201, 1), SizeError);
}

TEST_CASE("sample_subset draws uniformly") {
    std::vector<int> population = {0, 1, 2, 3};
    int counts[4] = {0, 0, 0, 0};
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        auto pick = sample_subset(population, 1, static_cast<uint64_t>(t) + 1000);
        counts[pick[0]]++;
    }
    // 3 sigma around 2500 for a Binomial(10000, 1/4) is about +-130.
    for (int c : counts) {
        CHECK(c > 2370);
        CHECK(c < 2630);
    }
}

TEST_CASE("collate_sft masks exactly the response and closing EOS") {
    std::vector<PreferenceRecord> records = {make_record("abcde", "xyz", "r")};
    auto [batches, skipped] = collate_sft(records, 64, 8);
    CHECK(skipped == 0);
    REQUIRE(batches.size() == 1);
    const SftBatch& batch = batches[0];
    CHECK(batch.rows == 1);
    CHECK(batch.cols == 10);

    CHECK(batch.token_at(0, 0) == kBosId);
    for (int64_t c = 1; c <= 5; ++c) CHECK(batch.token_at(0, c) == 'a' + (c - 1));
    CHECK(batch.token_at(0, 6) == 'x');
    CHECK(batch.token_at(0, 7) == 'y');
    CHECK(batch.token_at(0, 8) == 'z');
    CHECK(batch.token_at(0, 9) == kEosId);

    // 5-token prompt, 3-token response: exactly 4 scored positions.
    int ones = 0;
    for (int64_t c = 0; c < batch.cols; ++c) ones += batch.masked_at(0, c) ? 1 : 0;
    CHECK(ones == 4);
    for (int64_t c = 0; c <= 5; ++c) CHECK_FALSE(batch.masked_at(0, c));
    for (int64_t c = 6; c <= 9; ++c) CHECK(batch.masked_at(0, c));
}

TEST_CASE("collate_sft truncates the prompt from the left") {
    std::vector<PreferenceRecord> records = {make_record("abcde", "xyz", "r")};
    auto [batches, skipped] = collate_sft(records, 8, 8);
    CHECK(skipped == 0);
    const SftBatch& batch = batches[0];
    CHECK(batch.cols == 8);
    CHECK(batch.token_at(0, 0) == kBosId);
    CHECK(batch.token_at(0, 1) == 'c');  // "ab" dropped, newest context kept
    CHECK(batch.token_at(0, 2) == 'd');
    CHECK(batch.token_at(0, 3) == 'e');
    CHECK(batch.token_at(0, 4) == 'x');
    CHECK(batch.token_at(0, 7) == kEosId);
    for (int64_t c = 0; c <= 3; ++c) CHECK_FALSE(batch.masked_at(0, c));
    for (int64_t c = 4; c <= 7; ++c) CHECK(batch.masked_at(0, c));

    SUBCASE("the whole prompt can be truncated away") {
        auto [tight, tight_skipped] = collate_sft(records, 5, 8);
        CHECK(tight_skipped == 0);
        CHECK(tight[0].cols == 5);
        CHECK(tight[0].token_at(0, 0) == kBosId);
        CHECK(tight[0].token_at(0, 1) == 'x');
        CHECK(tight[0].token_at(0, 4) == kEosId);
    }
}

TEST_CASE("collate_sft skip rules") {
    std::vector<PreferenceRecord> records = {
        make_record("p", "", "r"),            // empty chosen
        make_record("abcde", "xyz", "r"),     // fine
        make_record("p", "wxyz", "r"),        // response alone cannot fit at max 5
    };
    auto [batches, skipped] = collate_sft(records, 5, 8);
    CHECK(skipped == 2);
    REQUIRE(batches.size() == 1);
    CHECK(batches[0].rows == 1);

    CHECK_THROWS_AS(collate_sft(records, 5, 0), ContractError);
    CHECK_THROWS_AS(collate_sft(records, 2, 8), ContractError);

    auto [none, all_skipped] = collate_sft({make_record("p", "", "r")}, 16, 4);
    CHECK(none.empty());
    CHECK(all_skipped == 1);
}

TEST_CASE("collate_sft pads to the longest row per batch") {
    std::vector<PreferenceRecord> records = {
        make_record("abcde", "xyz", "r"),  // 10 tokens
        make_record("ab", "xy", "r"),      // 6 tokens
        make_record("abcd", "wxyz", "r"),  // 10 tokens
        make_record("ab", "wx", "r"),      // 6 tokens
    };
    auto [batches, skipped] = collate_sft(records, 64, 2);
    CHECK(skipped == 0);
    REQUIRE(batches.size() == 2);
    CHECK(batches[0].cols == 10);
    CHECK(batches[1].cols == 10);

    // Row 1 of batch 0 is 6 real tokens plus 4 pads, all unmasked.
    for (int64_t c = 6; c < 10; ++c) {
        CHECK(batches[0].token_at(1, c) == kPadId);
        CHECK_FALSE(batches[0].masked_at(1, c));
    }
    // No all-pad column: every batch column holds at least one real token.
    for (const auto& batch : batches) {
        for (int64_t c = 0; c < batch.cols; ++c) {
            bool any_real = false;
            for (int64_t r = 0; r < batch.rows; ++r) {
                if (batch.token_at(r, c) != kPadId) any_real = true;
            }
            CHECK(any_real);
        }
    }

    SUBCASE("identical-length rows produce no padding") {
        auto [even, even_skipped] = collate_sft(
            {make_record("ab", "xy", "r"), make_record("cd", "wz", "r")}, 64, 2);
        CHECK(even_skipped == 0);
        for (int token : even[0].tokens) CHECK(token != kPadId);
    }
}

TEST_CASE("collate_sft never masks column zero or padding") {
    Rng rng(77);
    std::vector<PreferenceRecord> records;
    for (int i = 0; i < 40; ++i) {
        auto random_text = [&](size_t max_len) {
            std::string s;
            size_t len = rng.below(max_len);
            for (size_t j = 0; j < len; ++j) s.push_back(static_cast<char>('a' + rng.below(26)));
            return s;
        };
        records.push_back(make_record(random_text(40), random_text(20), "r"));
    }
    auto [batches, skipped] = collate_sft(records, 24, 4);
    for (const auto& batch : batches) {
        for (int64_t r = 0; r < batch.rows; ++r) {
            CHECK_FALSE(batch.masked_at(r, 0));
            int64_t ones = 0;
            for (int64_t c = 0; c < batch.cols; ++c) {
                if (batch.masked_at(r, c)) {
                    ++ones;
                    CHECK(batch.token_at(r, c) != kPadId);
                    CHECK(batch.token_at(r, c) != kBosId);
                }
            }
            CHECK(ones >= 1);  // at least the EOS is scored
        }
    }
}

TEST_CASE("collate_dpo shares one truncated prompt across both responses") {
    std::vector<PreferenceRecord> records = {make_record("abcde", "xyz", "pq")};
    auto [batches, skipped] = collate_dpo(records, 64, 8);
    CHECK(skipped == 0);
    REQUIRE(batches.size() == 1);
    const DpoExample& ex = batches[0].examples.at(0);
    CHECK(ex.prompt == std::vector<int>{kBosId, 'a', 'b', 'c', 'd', 'e'});
    CHECK(ex.chosen == std::vector<int>{'x', 'y', 'z', kEosId});
    CHECK(ex.rejected == std::vector<int>{'p', 'q', kEosId});

    SUBCASE("truncation is driven by the longer response") {
        auto [tight, tight_skipped] = collate_dpo(records, 8, 8);
        CHECK(tight_skipped == 0);
        const DpoExample& t = tight[0].examples.at(0);
        // Budget is 8 - 2 - max(3, 2) = 3 prompt tokens for BOTH responses.
        CHECK(t.prompt == std::vector<int>{kBosId, 'c', 'd', 'e'});
        CHECK(t.chosen.size() == 4);
        CHECK(t.rejected.size() == 3);
    }
}

TEST_CASE("collate_dpo skip rules and batching") {
    std::vector<PreferenceRecord> records = {
        make_record("p", "xyz", "", 1),     // empty rejected
        make_record("p", "", "pq", 2),      // empty chosen
        make_record("ab", "xy", "pq", 3),   // fine
        make_record("p", "wxyz", "pq", 4),  // chosen alone cannot fit at max 5
        make_record("cd", "uv", "st", 5),   // fine
        make_record("ef", "gh", "ij", 6),   // fine
    };
    auto [batches, skipped] = collate_dpo(records, 5, 2);
    CHECK(skipped == 3);
    REQUIRE(batches.size() == 2);
    CHECK(batches[0].examples.size() == 2);
    CHECK(batches[1].examples.size() == 1);
    CHECK(batches[0].examples[0].source_index == 3);
    CHECK(batches[1].examples[0].source_index == 6);
}
