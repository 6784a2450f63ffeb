#include "persona/corpus.hpp"
#include "persona/errors.hpp"
#include "persona/textfeat.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace persona;
using corpus::LabeledCorpus;
using corpus::TraitScheme;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

} // namespace

TEST_SUITE_BEGIN("corpus");

TEST_CASE("load_corpus accepts a full record and rejects bad ones") {
    const auto scheme = TraitScheme::big_five();

    SUBCASE("valid line") {
        auto path = write_temp(
            "corpus_ok.jsonl",
            R"({"id":"d1","text":"hello","labels":{"OPN":1,"CON":0,"EXT":1,"AGR":0,"NEU":1}})" "\n");
        auto c = corpus::load_corpus(path, scheme);
        REQUIRE(c.size() == 1);
        CHECK(c.docs[0].id == "d1");
        CHECK(c.docs[0].text == "hello");
        CHECK(c.docs[0].labels.at("OPN") == 1);
        CHECK(c.docs[0].labels.at("NEU") == 1);
    }

    SUBCASE("missing trait label names the trait") {
        auto path = write_temp(
            "corpus_missing.jsonl",
            R"({"id":"d1","text":"hello","labels":{"OPN":1,"CON":0,"EXT":1,"AGR":0}})" "\n");
        CHECK_THROWS_WITH_AS(corpus::load_corpus(path, scheme),
                             doctest::Contains("NEU"), DataError);
    }

    SUBCASE("duplicate ids rejected") {
        const std::string line =
            R"({"id":"d1","text":"hello","labels":{"OPN":1,"CON":0,"EXT":1,"AGR":0,"NEU":1}})";
        auto path = write_temp("corpus_dup.jsonl", line + "\n" + line + "\n");
        CHECK_THROWS_WITH_AS(corpus::load_corpus(path, scheme),
                             doctest::Contains("duplicate"), DataError);
    }

    SUBCASE("malformed line reports the line number") {
        auto path = write_temp("corpus_bad.jsonl", "{not json}\n");
        CHECK_THROWS_WITH_AS(corpus::load_corpus(path, scheme),
                             doctest::Contains("line 1"), DataError);
    }
}

TEST_CASE("clean_for_text_encoder") {
    SUBCASE("whitespace collapse") { CHECK(corpus::clean_for_text_encoder("a   b\t c ") == "a b c"); }
    SUBCASE("identity on clean input") { CHECK(corpus::clean_for_text_encoder("abc") == "abc"); }
    SUBCASE("control characters removed") {
        CHECK(corpus::clean_for_text_encoder(std::string("a\0b", 3)) == "ab");
    }
    SUBCASE("punctuation variants mapped to ASCII") {
        CHECK(corpus::clean_for_text_encoder("don’t “quote” — dash") ==
              "don't \"quote\" - dash");
        CHECK(corpus::clean_for_text_encoder("wait…") == "wait...");
    }
    SUBCASE("idempotent on random-ish inputs") {
        const std::string samples[] = {
            "a   b\t c ", "don’t  stop", "　x　", "line\r\nbreaks\n\n",
            "“a”  —  b…", "", "   ", "plain text"};
        for (const auto& s : samples) {
            auto once = corpus::clean_for_text_encoder(s);
            CHECK(corpus::clean_for_text_encoder(once) == once);
        }
    }
}

TEST_CASE("split allocation and determinism") {
    auto make = [](std::size_t n) {
        LabeledCorpus c;
        c.scheme = TraitScheme{"solo", {"X"}};
        for (std::size_t i = 0; i < n; ++i)
            c.docs.push_back({"d" + std::to_string(i), "text", {{"X", int(i % 2)}}});
        return c;
    };

    SUBCASE("10 docs give (7,2,1)") {
        auto c = make(10);
        auto idx = corpus::split(c, {0.7, 0.2, 0.1, 42, ""});
        CHECK(idx.train.size() == 7);
        CHECK(idx.val.size() == 2);
        CHECK(idx.test.size() == 1);
    }

    SUBCASE("2468 docs: floor shares, remainder to train") {
        // floor(0.2*2468)=493, floor(0.1*2468)=246, train takes the rest.
        auto c = make(2468);
        auto idx = corpus::split(c, {0.7, 0.2, 0.1, 7, ""});
        CHECK(idx.val.size() == 493);
        CHECK(idx.test.size() == 246);
        CHECK(idx.train.size() == 2468 - 493 - 246);
    }

    SUBCASE("same seed twice gives identical partitions") {
        auto c = make(57);
        auto a = corpus::split(c, {0.7, 0.2, 0.1, 9, ""});
        auto b = corpus::split(c, {0.7, 0.2, 0.1, 9, ""});
        CHECK(a.train == b.train);
        CHECK(a.val == b.val);
        CHECK(a.test == b.test);
    }

    SUBCASE("partition property across seeds") {
        auto c = make(41);
        for (std::uint64_t seed : {0ull, 1ull, 2ull, 3ull, 99ull}) {
            auto idx = corpus::split(c, {0.7, 0.2, 0.1, seed, ""});
            std::set<std::size_t> all;
            for (auto i : idx.train) all.insert(i);
            for (auto i : idx.val) all.insert(i);
            for (auto i : idx.test) all.insert(i);
            CHECK(all.size() == 41); // disjoint and covering
            CHECK(idx.train.size() + idx.val.size() + idx.test.size() == 41);
        }
    }

    SUBCASE("too small corpus rejected") {
        auto c = make(9);
        CHECK_THROWS_AS(corpus::split(c, {0.7, 0.2, 0.1, 1, ""}), DataError);
    }

    SUBCASE("stratified split balances the chosen trait") {
        auto c = make(100); // labels alternate, 50/50
        auto idx = corpus::split(c, {0.7, 0.2, 0.1, 5, "X"});
        auto ones_in = [&](const std::vector<std::size_t>& part) {
            std::size_t n = 0;
            for (auto i : part) n += c.docs[i].labels.at("X");
            return n;
        };
        CHECK(ones_in(idx.test) == 5);
        CHECK(ones_in(idx.val) == 10);
    }
}

TEST_CASE("mbti code conversion") {
    auto labels = corpus::labels_from_mbti_code("INTP");
    CHECK(labels.at("I/E") == 1);
    CHECK(labels.at("N/S") == 1);
    CHECK(labels.at("T/F") == 1);
    CHECK(labels.at("P/J") == 1);
    labels = corpus::labels_from_mbti_code("ESFJ");
    CHECK(labels.at("I/E") == 0);
    CHECK(labels.at("N/S") == 0);
    CHECK(labels.at("T/F") == 0);
    CHECK(labels.at("P/J") == 0);
    CHECK_THROWS_AS(corpus::labels_from_mbti_code("XXTP"), DataError);
    CHECK_THROWS_AS(corpus::labels_from_mbti_code("IN"), DataError);
}

TEST_CASE("generate_synthetic determinism and signal") {
    const auto scheme = TraitScheme::big_five();

    SUBCASE("same seed twice is byte-identical") {
        auto a = corpus::generate_synthetic(30, scheme, 0.5, 11);
        auto b = corpus::generate_synthetic(30, scheme, 0.5, 11);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a.docs[i].id == b.docs[i].id);
            CHECK(a.docs[i].text == b.docs[i].text);
            CHECK(a.docs[i].labels == b.docs[i].labels);
        }
    }

    SUBCASE("signal 1.0 separates classes with a threshold rule") {
        auto c = corpus::generate_synthetic(500, scheme, 1.0, 3);
        // Brute-force threshold sweep on the signal-lexicon ratio of one trait.
        const std::string trait = scheme.traits[0];
        auto lex = textfeat::make_lexicon("sig", corpus::synthetic_signal_lexicon(trait));
        textfeat::LexiconSet lexset;
        lexset.add(lex);
        textfeat::FeatureDef def{"sig_ratio", textfeat::FeatureKind::LexiconRatio, "sig", 50};

        std::vector<std::pair<double, int>> scored;
        for (const auto& doc : c.docs)
            scored.push_back({textfeat::eval_feature(def, doc.text, lexset), doc.labels.at(trait)});

        double best = 0.0;
        for (double thr = 0.0; thr <= 1.0; thr += 0.005) {
            std::size_t correct = 0;
            for (auto& [v, y] : scored) correct += ((v > thr) ? 1 : 0) == y;
            best = std::max(best, double(correct) / double(scored.size()));
        }
        CHECK(best >= 0.95);
    }

    SUBCASE("signal 0 leaves no signal words") {
        auto c = corpus::generate_synthetic(50, scheme, 0.0, 3);
        auto lex = textfeat::make_lexicon("sig", corpus::synthetic_signal_lexicon(scheme.traits[0]));
        textfeat::LexiconSet lexset;
        lexset.add(lex);
        textfeat::FeatureDef def{"sig_ratio", textfeat::FeatureKind::LexiconRatio, "sig", 50};
        for (const auto& doc : c.docs)
            CHECK(textfeat::eval_feature(def, doc.text, lexset) == 0.0);
    }
}

TEST_CASE("corpus round-trips through save/load") {
    auto scheme = TraitScheme::big_five();
    auto c = corpus::generate_synthetic(12, scheme, 0.8, 21);
    auto path = write_temp("corpus_rt.jsonl", "");
    corpus::save_corpus(c, path);
    auto back = corpus::load_corpus(path, scheme);
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(back.docs[i].id == c.docs[i].id);
        CHECK(back.docs[i].text == c.docs[i].text);
        CHECK(back.docs[i].labels == c.docs[i].labels);
    }
}

TEST_SUITE_END();
