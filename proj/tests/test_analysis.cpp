#include "persona/analysis.hpp"
#include "persona/errors.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace persona;
using namespace persona::analysis;

TEST_SUITE_BEGIN("analysis");

TEST_CASE("attention importance normalization and ordering") {
    auto scheme = corpus::TraitScheme{"solo", {"X"}};
    auto s = helpers::make_setup(40, scheme, 0.8, 41);
    auto model = helpers::make_model(s, helpers::tiny_model_config(), 42);

    auto report = attention_importance(model, s.docs, s.split.test, s.features);
    REQUIRE(report.entries.size() == s.features.n_features());

    SUBCASE("min maps to 0, max to 1, monotone in raw score") {
        double lo = 1e300, hi = -1e300;
        for (const auto& e : report.entries) {
            lo = std::min(lo, e.normalized);
            hi = std::max(hi, e.normalized);
            CHECK(e.normalized >= 0.0);
            CHECK(e.normalized <= 1.0);
        }
        CHECK(lo == doctest::Approx(0.0));
        CHECK(hi == doctest::Approx(1.0));
        for (const auto& a : report.entries)
            for (const auto& b : report.entries)
                if (a.raw > b.raw) CHECK(a.normalized >= b.normalized);
    }

    SUBCASE("ranking is a permutation consistent with raw order") {
        auto names = report.ranking();
        CHECK(names.size() == report.entries.size());
        std::vector<std::string> sorted = names;
        std::sort(sorted.begin(), sorted.end());
        auto catalog = s.features.feature_names;
        std::sort(catalog.begin(), catalog.end());
        CHECK(sorted == catalog);
        // entry with rank 1 is first in ranking()
        for (const auto& e : report.entries)
            if (e.rank == 1) CHECK(names[0] == e.feature);
    }

    SUBCASE("importance does not depend on test-set order") {
        auto reversed = s.split.test;
        std::reverse(reversed.begin(), reversed.end());
        auto again = attention_importance(model, s.docs, reversed, s.features);
        for (std::size_t i = 0; i < report.entries.size(); ++i)
            CHECK(report.entries[i].raw == doctest::Approx(again.entries[i].raw).epsilon(1e-12));
    }

    SUBCASE("per-document raw scores sum to layers * heads") {
        // With one test doc the total raw mass must equal the map count.
        std::vector<std::size_t> one{s.split.test[0]};
        auto single = attention_importance(model, s.docs, one, s.features);
        double total = 0.0;
        for (const auto& e : single.entries) total += e.raw;
        const double maps = model.config.psy.n_layers * model.config.psy.n_heads;
        CHECK(total == doctest::Approx(maps).epsilon(1e-9));
    }

    SUBCASE("empty test set errors") {
        CHECK_THROWS_AS(attention_importance(model, s.docs, {}, s.features), DataError);
    }
}

TEST_CASE("degenerate importance flags constant profiles") {
    // F = 1 gives attention 1.0 everywhere; with a single feature the min and
    // max coincide and the report must flag itself.
    auto scheme = corpus::TraitScheme{"solo", {"X"}};
    auto s = helpers::make_setup(20, scheme, 0.5, 51);

    textfeat::FeatureMatrix single;
    single.feature_names = {s.features.feature_names[0]};
    single.doc_ids = s.features.doc_ids;
    for (const auto& row : s.features.rows) single.rows.push_back({row[0]});

    auto std1 = featselect::Standardizer::fit(single, s.split.train);
    auto mc = helpers::tiny_model_config();
    Rng rng(52);
    auto model = fusion::Model::init(scheme, mc, s.docs, s.split.train, single.feature_names,
                                     std1, rng);

    auto report = attention_importance(model, s.docs, s.split.test, single);
    CHECK(report.degenerate);
    CHECK(report.entries[0].normalized == doctest::Approx(0.5));
}

TEST_CASE("cross_report pairs common features") {
    ImportanceReport a, b;
    a.entries = {{"A", 3.0, 0.85, 1}, {"B", 2.0, 0.4, 2}, {"only_a", 1.0, 0.0, 3}};
    b.entries = {{"B", 5.0, 0.6, 1}, {"A", 4.0, 0.81, 2}, {"only_b", 1.0, 0.1, 3}};

    auto rows = cross_report(a, b);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].feature == "A");
    CHECK(rows[0].avg == doctest::Approx((0.85 + 0.81) / 2.0));
    CHECK(rows[1].feature == "B");

    SUBCASE("disjoint reports produce no rows") {
        ImportanceReport c;
        c.entries = {{"zzz", 1.0, 1.0, 1}};
        CHECK(cross_report(a, c).empty());
    }

    SUBCASE("csv round-trip shape") {
        auto path = (std::filesystem::temp_directory_path() / "cross_rt.csv").string();
        save_cross_csv(rows, path);
        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        CHECK(header == "feature_name,score_a,score_b,avg");
        std::size_t lines = 0;
        for (std::string l; std::getline(in, l);) lines += !l.empty();
        CHECK(lines == 2);
    }
}

TEST_CASE("importance csv round-trip") {
    ImportanceReport r;
    r.entries = {{"f1", 1.25, 1.0, 1}, {"f2", 0.5, 0.0, 2}};
    auto path = (std::filesystem::temp_directory_path() / "imp_rt.csv").string();
    save_importance_csv(r, path);
    auto back = load_importance_csv(path);
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[0].feature == "f1");
    CHECK(back.entries[0].raw == 1.25);
    CHECK(back.entries[1].rank == 2);
}

TEST_CASE("emit_reports writes present artifacts and a manifest") {
    auto dir = (std::filesystem::temp_directory_path() / "persona_emit_test").string();
    std::filesystem::remove_all(dir);

    RunArtifacts artifacts;
    artifacts.metrics_json = "{\"mean\": 0.5}\n";
    artifacts.importance_csv = "feature_name,raw_score,normalized_score,rank\n";

    auto written = emit_reports(artifacts, dir);
    CHECK(std::filesystem::exists(dir + "/metrics.json"));
    CHECK(std::filesystem::exists(dir + "/importance.csv"));
    CHECK_FALSE(std::filesystem::exists(dir + "/sweep.csv"));
    CHECK(std::filesystem::exists(dir + "/manifest.json"));
    CHECK(written.size() == 3);

    SUBCASE("rerun produces identical bytes") {
        auto read = [&](const std::string& p) {
            std::ifstream in(p, std::ios::binary);
            return std::string((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
        };
        auto before = read(dir + "/metrics.json");
        emit_reports(artifacts, dir);
        CHECK(read(dir + "/metrics.json") == before);
    }
}

TEST_SUITE_END();
