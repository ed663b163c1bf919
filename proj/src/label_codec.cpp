#include "otalign/label_codec.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <string>

#include "otalign/csv_io.hpp"
#include "otalign/error.hpp"

namespace otalign {

namespace {

constexpr std::array<std::string_view, kNumDiseases> kDiseaseNames = {
    "enlarged cardiomediastinum",
    "cardiomegaly",
    "lung opacity",
    "lung lesion",
    "edema",
    "consolidation",
    "pneumonia",
    "atelectasis",
    "pneumothorax",
    "pleural effusion",
    "pleural other",
    "fracture",
    "support devices",
    "no finding",
};

constexpr std::array<std::string_view, kNumStates> kStateNames = {
    "unmentioned",
    "positive",
    "negative",
    "unclear",
};

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool counts_positive(DiseaseState s, PositivePolicy policy) {
    if (s == DiseaseState::Positive) return true;
    return policy == PositivePolicy::UncertainAsPositive && s == DiseaseState::Unclear;
}

} // namespace

std::span<const std::string_view, kNumDiseases> disease_names() { return kDiseaseNames; }

std::string_view disease_name(std::size_t index) {
    if (index >= kNumDiseases) throw ValidationError("disease index out of range");
    return kDiseaseNames[index];
}

std::string_view state_name(DiseaseState state) {
    return kStateNames[static_cast<std::size_t>(state)];
}

std::pair<std::size_t, DiseaseState> parse_label(std::string_view line) {
    auto colon = line.find(':');
    if (colon == std::string_view::npos) {
        throw ParseError("label line missing ':' separator: '" + std::string(line) + "'");
    }
    std::string disease = to_lower(trim(line.substr(0, colon)));
    std::string state = to_lower(trim(line.substr(colon + 1)));

    auto dit = std::find(kDiseaseNames.begin(), kDiseaseNames.end(), disease);
    if (dit == kDiseaseNames.end()) {
        throw ParseError("unknown disease name: '" + disease + "'");
    }
    auto sit = std::find(kStateNames.begin(), kStateNames.end(), state);
    if (sit == kStateNames.end()) {
        throw ParseError("unknown state keyword: '" + state + "'");
    }
    return {static_cast<std::size_t>(dit - kDiseaseNames.begin()),
            static_cast<DiseaseState>(sit - kStateNames.begin())};
}

LabelVector encode_onehot(const DiseaseLabelSet& labels) {
    LabelVector out{};
    for (std::size_t g = 0; g < kNumDiseases; ++g) {
        out[g * kNumStates + static_cast<std::size_t>(labels.states[g])] = 1.0;
    }
    return out;
}

DiseaseLabelSet decode_onehot(const LabelVector& probs) {
    for (double p : probs) {
        if (!std::isfinite(p)) throw NumericalError("decode_onehot: non-finite entry");
    }
    DiseaseLabelSet out;
    for (std::size_t g = 0; g < kNumDiseases; ++g) {
        std::size_t best = 0;
        double best_p = probs[g * kNumStates];
        for (std::size_t s = 1; s < kNumStates; ++s) {
            double p = probs[g * kNumStates + s];
            if (p > best_p) { // strict: ties stay at the lowest code
                best_p = p;
                best = s;
            }
        }
        out.states[g] = static_cast<DiseaseState>(best);
    }
    return out;
}

CeMetrics ce_metrics(std::span<const DiseaseLabelSet> pred, std::span<const DiseaseLabelSet> truth,
                     PositivePolicy policy) {
    if (pred.size() != truth.size()) {
        throw ValidationError("ce_metrics: prediction/truth length mismatch");
    }
    if (pred.empty()) {
        throw ValidationError("ce_metrics: empty input");
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t d = 0; d < kNumDiseases; ++d) {
            bool p = counts_positive(pred[i].states[d], policy);
            bool t = counts_positive(truth[i].states[d], policy);
            tp += (p && t);
            fp += (p && !t);
            fn += (!p && t);
        }
    }
    CeMetrics m;
    if (tp == 0 && fp == 0 && fn == 0) {
        m.precision = m.recall = m.f1 = 1.0; // vacuous agreement
        return m;
    }
    m.precision = (tp + fp > 0) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = (tp + fn > 0) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = (m.precision + m.recall > 0.0) ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

void write_labels_csv(const std::filesystem::path& path, std::span<const DiseaseLabelSet> labels) {
    std::ostringstream out;
    out << "id";
    for (std::size_t d = 0; d < kNumDiseases; ++d) out << ",d" << d;
    out << '\n';
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << i;
        for (std::size_t d = 0; d < kNumDiseases; ++d) {
            out << ',' << static_cast<int>(labels[i].states[d]);
        }
        out << '\n';
    }
    write_text(path, out.str());
}

std::vector<DiseaseLabelSet> read_labels_csv(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    if (lines.empty()) throw ParseError("empty label CSV: " + path.string());
    std::vector<DiseaseLabelSet> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        auto cells = split(lines[i], ',');
        if (cells.size() != kNumDiseases + 1) {
            throw ParseError("label CSV row has " + std::to_string(cells.size()) + " cells, expected 15");
        }
        DiseaseLabelSet set;
        for (std::size_t d = 0; d < kNumDiseases; ++d) {
            long long code = parse_int(cells[d + 1]);
            if (code < 0 || code > 3) {
                throw ParseError("state code out of range: " + std::to_string(code));
            }
            set.states[d] = static_cast<DiseaseState>(code);
        }
        out.push_back(set);
    }
    return out;
}

void write_labels_text(const std::filesystem::path& path, std::span<const DiseaseLabelSet> labels) {
    std::ostringstream out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out << '\n';
        for (std::size_t d = 0; d < kNumDiseases; ++d) {
            out << kDiseaseNames[d] << ": " << state_name(labels[i].states[d]) << '\n';
        }
    }
    write_text(path, out.str());
}

std::vector<DiseaseLabelSet> read_labels_text(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    std::vector<DiseaseLabelSet> out;
    DiseaseLabelSet current;
    bool in_sample = false;
    for (const auto& line : lines) {
        if (trim(line).empty()) {
            if (in_sample) {
                out.push_back(current);
                current = {};
                in_sample = false;
            }
            continue;
        }
        auto [disease, state] = parse_label(line);
        current.states[disease] = state;
        in_sample = true;
    }
    if (in_sample) out.push_back(current);
    return out;
}

} // namespace otalign
