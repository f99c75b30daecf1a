#pragma once

// Result parsing: submission validation against the server-private session
// expectations, reason-coded verdicts, vote extraction and the accept /
// reject / extend / bonus reports.

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "avqoe/json_support.hpp"
#include "avqoe/provenance.hpp"
#include "avqoe/session_builder.hpp"
#include "avqoe/study.hpp"

namespace avqoe {

enum class BrightnessStatus { pass, hard_fail };

struct Submission {
    std::string assignment_id;
    std::string session_id;
    std::string rater_id;
    std::string verification_code;
    std::string run_id;
    /// answers[slot][position] following the slot's injected item order.
    std::vector<std::vector<int>> answers;
    /// Measured playback duration per slot, seconds.
    std::vector<double> playback_s;
    BrightnessStatus brightness_outcome = BrightnessStatus::pass;
    std::int64_t started_at = 0;
    std::int64_t submitted_at = 0;

    bool operator==(const Submission&) const = default;
};

enum class RejectReason {
    gold_failed,
    trap_item_failed,
    trap_clip_failed,
    repeat_inconsistent,
    playback_duration,
    brightness_second_failure,
    low_variance,
    bad_verification_code,
};

struct CleansingVerdict {
    std::set<RejectReason> reasons;
    /// Reasons recorded without rejecting (e.g. advisory-only repeat checks).
    std::set<RejectReason> advisories;

    bool accepted() const { return reasons.empty(); }
    bool operator==(const CleansingVerdict&) const = default;
};

struct VoteRecord {
    std::string clip_id;
    std::string model_id;
    std::string item_id;
    int score = 0;
    std::string rater_id;
    std::string run_id;

    auto operator<=>(const VoteRecord&) const = default;
};

/// Throws UnknownSession when the submission names a different session and
/// MalformedSubmission when answers/playback do not match the session shape.
CleansingVerdict validate_submission(const Submission& sub, const Session& session, const StudyConfig& config);

/// Votes of an accepted submission: test slots only, original items only,
/// first occurrence of the repeated item.
std::vector<VoteRecord> extract_votes(const Submission& sub, const Session& session, const StudyConfig& config);

struct RejectedEntry {
    std::string assignment_id;
    std::string rater_id;
    std::set<RejectReason> reasons;

    bool operator==(const RejectedEntry&) const = default;
};

struct ExtendEntry {
    std::string clip_id;
    int accepted_votes = 0;
    int missing_votes = 0;

    bool operator==(const ExtendEntry&) const = default;
};

struct CleansingReport {
    std::vector<std::string> accepted;
    std::vector<RejectedEntry> rejected;
    std::vector<ExtendEntry> extend;
    std::vector<std::string> bonus;
    /// Submissions whose session is not in the manifest.
    std::vector<std::string> unmatched;
    std::size_t total = 0;
    double acceptance_rate = 0.0;
    std::map<std::string, int> accepted_votes_per_clip;

    bool operator==(const CleansingReport&) const = default;
};

struct CleanseResult {
    std::vector<VoteRecord> votes;
    CleansingReport report;
};

using BonusPredicate = std::function<bool(const Submission&, const CleansingVerdict&)>;

/// Output is sorted, so any permutation of the input yields identical results.
CleanseResult cleanse(std::vector<Submission> subs, const SessionManifest& manifest,
                      const BonusPredicate& bonus = {});

/// Extend list for a per-clip accepted-vote count over the study's test clips.
std::vector<ExtendEntry> extend_list(const StudyConfig& config, const std::map<std::string, int>& accepted_votes);

/// Per-clip vote-group counts (one per accepted submission slot) from votes.
std::map<std::string, int> votes_per_clip(const std::vector<VoteRecord>& votes, const StudyConfig& config);

// --- I/O --------------------------------------------------------------------

Submission parse_submission(const Json& j);

/// Reads JSON lines; blank lines and a leading {"provenance": ...} line are
/// skipped. Throws ParseError naming the 1-based line number.
std::vector<Submission> read_submissions_jsonl(std::istream& in);
std::string write_submissions_jsonl(const std::vector<Submission>& subs, const Provenance& prov);

std::string votes_csv(const std::vector<VoteRecord>& votes, const Provenance& prov);
struct VotesFile {
    std::vector<VoteRecord> votes;
    std::optional<Provenance> provenance;
};
VotesFile read_votes_csv(std::istream& in);

Json report_json(const CleansingReport& report, const Provenance& prov);

NLOHMANN_JSON_SERIALIZE_ENUM(BrightnessStatus, {{BrightnessStatus::pass, "pass"},
                                                {BrightnessStatus::hard_fail, "hard_fail"}})
NLOHMANN_JSON_SERIALIZE_ENUM(RejectReason, {{RejectReason::gold_failed, "gold_failed"},
                                            {RejectReason::trap_item_failed, "trap_item_failed"},
                                            {RejectReason::trap_clip_failed, "trap_clip_failed"},
                                            {RejectReason::repeat_inconsistent, "repeat_inconsistent"},
                                            {RejectReason::playback_duration, "playback_duration"},
                                            {RejectReason::brightness_second_failure, "brightness_second_failure"},
                                            {RejectReason::low_variance, "low_variance"},
                                            {RejectReason::bad_verification_code, "bad_verification_code"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Submission, assignment_id, session_id, rater_id, verification_code,
                                                run_id, answers, playback_s, brightness_outcome, started_at,
                                                submitted_at)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RejectedEntry, assignment_id, rater_id, reasons)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ExtendEntry, clip_id, accepted_votes, missing_votes)

Json verdict_json(const CleansingVerdict& verdict);

}  // namespace avqoe
