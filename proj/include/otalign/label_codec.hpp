#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace otalign {

inline constexpr std::size_t kNumDiseases = 14;
inline constexpr std::size_t kNumStates = 4;
inline constexpr std::size_t kLabelVectorSize = kNumDiseases * kNumStates;

// One-hot case order fixes the integer codes.
enum class DiseaseState : int {
    Unmentioned = 0,
    Positive = 1,
    Negative = 2,
    Unclear = 3,
};

// Canonical disease names, fixed order, indices 0..13.
std::span<const std::string_view, kNumDiseases> disease_names();
std::string_view disease_name(std::size_t index);
std::string_view state_name(DiseaseState state);

struct DiseaseLabelSet {
    std::array<DiseaseState, kNumDiseases> states{}; // all Unmentioned by default

    bool operator==(const DiseaseLabelSet&) const = default;
};

// 14 groups of 4; group g occupies indices [4g, 4g+4).
using LabelVector = std::array<double, kLabelVectorSize>;

struct CeMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Which predicted/true states count as the positive event.
enum class PositivePolicy {
    PositiveOnly,        // state == positive
    UncertainAsPositive, // positive or unclear
};

// Parses a "disease: state" line; matching is case-insensitive and
// whitespace-trimmed. Throws ParseError naming the offending token.
std::pair<std::size_t, DiseaseState> parse_label(std::string_view line);

LabelVector encode_onehot(const DiseaseLabelSet& labels);

// Per-group argmax; ties resolve to the lowest state code. Throws
// NumericalError on non-finite entries.
DiseaseLabelSet decode_onehot(const LabelVector& probs);

// Micro-averaged precision/recall/F1 of the positive event, pooled over all
// samples and diseases. Both sides empty of positives counts as perfect
// agreement (1); otherwise a zero denominator yields 0.
CeMetrics ce_metrics(std::span<const DiseaseLabelSet> pred, std::span<const DiseaseLabelSet> truth,
                     PositivePolicy policy = PositivePolicy::PositiveOnly);

// Label CSV: header "id,d0,...,d13", one row per sample, integer state codes.
void write_labels_csv(const std::filesystem::path& path, std::span<const DiseaseLabelSet> labels);
std::vector<DiseaseLabelSet> read_labels_csv(const std::filesystem::path& path);

// Label text file: one "disease: state" line per label, blank line between
// samples.
void write_labels_text(const std::filesystem::path& path, std::span<const DiseaseLabelSet> labels);
std::vector<DiseaseLabelSet> read_labels_text(const std::filesystem::path& path);

} // namespace otalign
