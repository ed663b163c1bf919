#include <doctest.h>

#include <filesystem>

#include "otalign/error.hpp"
#include "otalign/label_codec.hpp"
#include "otalign/numerics.hpp"

using namespace otalign;
namespace fs = std::filesystem;

namespace {

DiseaseLabelSet set_with(std::initializer_list<std::pair<std::size_t, DiseaseState>> entries) {
    DiseaseLabelSet s;
    for (auto [d, st] : entries) s.states[d] = st;
    return s;
}

DiseaseLabelSet random_set(SeededRng& rng) {
    DiseaseLabelSet s;
    for (auto& st : s.states) st = static_cast<DiseaseState>(rng.next_u64() % 4);
    return s;
}

fs::path temp_file(const char* name) {
    return fs::temp_directory_path() / name;
}

} // namespace

TEST_CASE("parse_label recognizes names and states") {
    auto [d, s] = parse_label("cardiomegaly: positive");
    CHECK(d == 1);
    CHECK(s == DiseaseState::Positive);

    auto [d2, s2] = parse_label("No Finding: unmentioned");
    CHECK(d2 == 13);
    CHECK(s2 == DiseaseState::Unmentioned);

    auto [d3, s3] = parse_label("  PLEURAL EFFUSION :  Unclear ");
    CHECK(d3 == 9);
    CHECK(s3 == DiseaseState::Unclear);
}

TEST_CASE("parse_label names the offending token") {
    try {
        parse_label("cardiomegalia: positive");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("cardiomegalia") != std::string::npos);
    }
    try {
        parse_label("cardiomegaly: maybe");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("maybe") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_label("no separator here"), ParseError);
}

TEST_CASE("encode_onehot produces one-hot groups in the fixed order") {
    LabelVector all_unmentioned = encode_onehot(DiseaseLabelSet{});
    CHECK(all_unmentioned.size() == 56);
    for (std::size_t g = 0; g < kNumDiseases; ++g) {
        CHECK(all_unmentioned[4 * g] == 1.0);
        CHECK(all_unmentioned[4 * g + 1] == 0.0);
        CHECK(all_unmentioned[4 * g + 2] == 0.0);
        CHECK(all_unmentioned[4 * g + 3] == 0.0);
    }

    LabelVector v = encode_onehot(set_with({{1, DiseaseState::Positive}}));
    CHECK(v[4] == 0.0);
    CHECK(v[5] == 1.0);
    CHECK(v[6] == 0.0);
    CHECK(v[7] == 0.0);
    for (std::size_t g = 0; g < kNumDiseases; ++g) {
        double sum = v[4 * g] + v[4 * g + 1] + v[4 * g + 2] + v[4 * g + 3];
        CHECK(sum == 1.0);
    }
}

TEST_CASE("decode_onehot argmax with low-code tie break") {
    LabelVector v{};
    v.fill(0.0);
    for (std::size_t g = 0; g < kNumDiseases; ++g) v[4 * g] = 1.0;
    v[4] = 0.1;
    v[5] = 0.7;
    v[6] = 0.1;
    v[7] = 0.1;
    DiseaseLabelSet s = decode_onehot(v);
    CHECK(s.states[1] == DiseaseState::Positive);

    LabelVector tie{};
    for (std::size_t i = 0; i < tie.size(); ++i) tie[i] = 0.25;
    DiseaseLabelSet st = decode_onehot(tie);
    for (auto code : st.states) CHECK(code == DiseaseState::Unmentioned);

    LabelVector bad{};
    bad[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(decode_onehot(bad), NumericalError);
}

TEST_CASE("encode/decode round-trip on random and single-state label sets") {
    SeededRng rng(77);
    for (int t = 0; t < 500; ++t) {
        DiseaseLabelSet s = random_set(rng);
        CHECK(decode_onehot(encode_onehot(s)) == s);
    }
    // all 56 single-state variations
    for (std::size_t d = 0; d < kNumDiseases; ++d) {
        for (int code = 0; code < 4; ++code) {
            DiseaseLabelSet s = set_with({{d, static_cast<DiseaseState>(code)}});
            CHECK(decode_onehot(encode_onehot(s)) == s);
        }
    }
}

TEST_CASE("ce_metrics hand-counted fixture") {
    // pred positives {cardiomegaly, edema}; truth positives {edema, pneumonia}
    std::vector<DiseaseLabelSet> pred = {set_with({{1, DiseaseState::Positive}, {4, DiseaseState::Positive}})};
    std::vector<DiseaseLabelSet> truth = {set_with({{4, DiseaseState::Positive}, {6, DiseaseState::Positive}})};
    CeMetrics m = ce_metrics(pred, truth);
    CHECK(m.precision == 0.5);
    CHECK(m.recall == 0.5);
    CHECK(m.f1 == 0.5);
}

TEST_CASE("ce_metrics degenerate and perfect cases") {
    std::vector<DiseaseLabelSet> a = {set_with({{2, DiseaseState::Positive}})};
    CeMetrics perfect = ce_metrics(a, a);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    std::vector<DiseaseLabelSet> none = {DiseaseLabelSet{}};
    CeMetrics vacuous = ce_metrics(none, none);
    CHECK(vacuous.precision == 1.0);
    CHECK(vacuous.recall == 1.0);
    CHECK(vacuous.f1 == 1.0);

    // pred has a positive, truth does not: zero recall denominator path
    std::vector<DiseaseLabelSet> p = {set_with({{0, DiseaseState::Positive}})};
    CeMetrics m = ce_metrics(p, none);
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.f1 == 0.0);

    CHECK_THROWS_AS(ce_metrics(a, std::vector<DiseaseLabelSet>{}), ValidationError);
    std::vector<DiseaseLabelSet> two = {a[0], a[0]};
    CHECK_THROWS_AS(ce_metrics(a, two), ValidationError);
}

TEST_CASE("ce_metrics is permutation invariant and f1 is the harmonic mean") {
    SeededRng rng(123);
    std::vector<DiseaseLabelSet> pred, truth;
    for (int i = 0; i < 12; ++i) {
        pred.push_back(random_set(rng));
        truth.push_back(random_set(rng));
    }
    CeMetrics base = ce_metrics(pred, truth);

    std::vector<DiseaseLabelSet> pred2 = pred, truth2 = truth;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        std::size_t j = rng.next_u64() % pred.size();
        std::swap(pred2[i], pred2[j]);
        std::swap(truth2[i], truth2[j]);
    }
    CeMetrics shuffled = ce_metrics(pred2, truth2);
    CHECK(base.precision == shuffled.precision);
    CHECK(base.recall == shuffled.recall);
    CHECK(base.f1 == shuffled.f1);

    if (base.precision > 0.0 && base.recall > 0.0) {
        double hm = 2.0 * base.precision * base.recall / (base.precision + base.recall);
        CHECK(base.f1 == doctest::Approx(hm).epsilon(1e-15));
    }
}

TEST_CASE("uncertain-as-positive policy counts unclear states") {
    std::vector<DiseaseLabelSet> pred = {set_with({{3, DiseaseState::Unclear}})};
    std::vector<DiseaseLabelSet> truth = {set_with({{3, DiseaseState::Positive}})};
    CHECK(ce_metrics(pred, truth).f1 == 0.0);
    CHECK(ce_metrics(pred, truth, PositivePolicy::UncertainAsPositive).f1 == 1.0);
}

TEST_CASE("label CSV and text round trips") {
    SeededRng rng(9);
    std::vector<DiseaseLabelSet> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(random_set(rng));

    auto csv = temp_file("otalign_labels_test.csv");
    write_labels_csv(csv, labels);
    CHECK(read_labels_csv(csv) == labels);

    auto txt = temp_file("otalign_labels_test.txt");
    write_labels_text(txt, labels);
    CHECK(read_labels_text(txt) == labels);

    fs::remove(csv);
    fs::remove(txt);
}
