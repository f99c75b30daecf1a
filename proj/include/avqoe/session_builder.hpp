#pragma once

// Seeded composition of rating sessions: balanced clip allocation, gold and
// trapping slot insertion, trap/repeat item injection (Template A), trapping
// clip overlays and the per-rater section schedule.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avqoe/json_support.hpp"
#include "avqoe/study.hpp"

namespace avqoe {

inline constexpr int kTestSlotsPerSession = 10;
inline constexpr int kSlotsPerSession = 12;

/// Item list shown under one clip. For Template A a decoy statement is
/// inserted at trap_index and the entry at repeat_source_index is shown a
/// second time at repeat_index.
struct InjectedItems {
    std::vector<std::string> items;
    std::optional<std::size_t> trap_index;
    std::optional<std::size_t> repeat_source_index;
    std::optional<std::size_t> repeat_index;
    std::string trap_statement_id;

    bool operator==(const InjectedItems&) const = default;
};

/// Prefix marking a decoy entry inside InjectedItems::items.
inline constexpr std::string_view kTrapItemPrefix = "trap:";

InjectedItems inject_items(Template tmpl, const std::vector<std::string>& items,
                           const std::vector<DecoyStatement>& decoy_pool, std::uint64_t seed);

struct TrapOverlay {
    double t0_s = 0.0;
    double t1_s = 0.0;
    std::string item_id;
    int score = 0;
    std::string message;

    bool operator==(const TrapOverlay&) const = default;
};

TrapOverlay make_trapping_sequence(const ClipRef& clip, const TrappingClipSpec& spec);

enum class SlotKind { test, gold, trapping };

struct GoldExpectation {
    std::string item_id;
    int expected_score = 0;
    int tolerance = 1;

    bool operator==(const GoldExpectation&) const = default;
};

struct Slot {
    SlotKind kind = SlotKind::test;
    ClipRef clip;
    InjectedItems items;
    int trap_expected_score = 0;  // answer expected at items.trap_index
    std::vector<GoldExpectation> gold;
    std::optional<TrapOverlay> overlay;

    bool operator==(const Slot&) const = default;
};

struct Session {
    std::string session_id;
    std::string assignment_id;
    std::string verification_code;
    std::uint64_t rng_seed = 0;
    std::vector<Slot> playlist;

    std::size_t gold_slot() const;
    std::size_t trapping_slot() const;

    bool operator==(const Session&) const = default;
};

/// Deterministic for fixed (config, seed). Each session holds ten distinct
/// test clips allocated least-served-first so that per-clip assignment counts
/// never differ by more than one, plus one gold and one trapping slot at
/// uniformly random positions. One session is one crowd assignment.
std::vector<Session> build_sessions(const StudyConfig& config, std::uint64_t seed);

/// Rater-facing view: no slot kinds, expected answers or overlays.
Json public_payload(const Session& session, const StudyConfig& config);

// --- Section schedule -------------------------------------------------------

enum class Section { qualification, calibration, instructions, setup, training, rating };

struct RaterHistory {
    bool qualified = false;
    std::optional<std::int64_t> qualified_at;
    std::optional<std::int64_t> last_setup_at;
    std::optional<std::int64_t> last_training_at;
};

/// Sections to show, in presentation order. Times are Unix seconds.
std::vector<Section> schedule_sections(const RaterHistory& history, std::int64_t now, int recurrence_min = 60);

// --- Manifests --------------------------------------------------------------

struct SessionManifest {
    StudyConfig config;
    std::uint64_t seed = 0;
    std::vector<Session> sessions;

    const Session* find(const std::string& session_id) const;
};

Json to_json(const SessionManifest& manifest);
SessionManifest manifest_from_json(const Json& j);
SessionManifest load_manifest(const std::string& path);

/// assignment_id,session_id,public_url rows (with provenance comment line).
std::string assignment_csv(const SessionManifest& manifest);

NLOHMANN_JSON_SERIALIZE_ENUM(SlotKind, {{SlotKind::test, "test"},
                                        {SlotKind::gold, "gold"},
                                        {SlotKind::trapping, "trapping"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Section, {{Section::qualification, "qualification"},
                                       {Section::calibration, "calibration"},
                                       {Section::instructions, "instructions"},
                                       {Section::setup, "setup"},
                                       {Section::training, "training"},
                                       {Section::rating, "rating"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(InjectedItems, items, trap_index, repeat_source_index,
                                                repeat_index, trap_statement_id)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrapOverlay, t0_s, t1_s, item_id, score, message)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GoldExpectation, item_id, expected_score, tolerance)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Slot, kind, clip, items, trap_expected_score, gold, overlay)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Session, session_id, assignment_id, verification_code, rng_seed,
                                                playlist)

}  // namespace avqoe
