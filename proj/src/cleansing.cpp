#include "avqoe/cleansing.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <sstream>
#include <tuple>

#include "avqoe/csv.hpp"
#include "avqoe/error.hpp"

namespace avqoe {

namespace {

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedSubmission, what); }

std::optional<std::size_t> first_position(const InjectedItems& items, const std::string& item_id) {
    for (std::size_t i = 0; i < items.items.size(); ++i) {
        if (items.items[i] == item_id) {
            return i;
        }
    }
    return std::nullopt;
}

void check_shape(const Submission& sub, const Session& session, const StudyConfig& config) {
    if (sub.answers.size() != session.playlist.size()) {
        malformed("expected answers for " + std::to_string(session.playlist.size()) + " slots, got " +
                  std::to_string(sub.answers.size()));
    }
    if (sub.playback_s.size() != session.playlist.size()) {
        malformed("expected playback durations for " + std::to_string(session.playlist.size()) + " slots");
    }
    for (std::size_t s = 0; s < session.playlist.size(); ++s) {
        if (sub.answers[s].size() != session.playlist[s].items.items.size()) {
            malformed("slot " + std::to_string(s) + " expects " +
                      std::to_string(session.playlist[s].items.items.size()) + " answers");
        }
        for (int score : sub.answers[s]) {
            if (score < 1 || score > config.scale_points) {
                malformed("score " + std::to_string(score) + " outside the scale in slot " + std::to_string(s));
            }
        }
    }
}

}  // namespace

CleansingVerdict validate_submission(const Submission& sub, const Session& session, const StudyConfig& config) {
    if (sub.session_id != session.session_id) {
        throw Error(ErrorCode::UnknownSession, "submission for " + sub.session_id + " checked against " +
                                                   session.session_id);
    }
    check_shape(sub, session, config);

    CleansingVerdict verdict;
    const auto& th = config.cleansing;
    std::int64_t n = 0;
    std::int64_t sum = 0;
    std::int64_t sum_sq = 0;

    for (std::size_t s = 0; s < session.playlist.size(); ++s) {
        const Slot& slot = session.playlist[s];
        const auto& ans = sub.answers[s];

        for (const auto& g : slot.gold) {
            if (const auto pos = first_position(slot.items, g.item_id)) {
                if (std::abs(ans[*pos] - g.expected_score) > g.tolerance) {
                    verdict.reasons.insert(RejectReason::gold_failed);
                }
            }
        }
        if (slot.items.trap_index && ans[*slot.items.trap_index] != slot.trap_expected_score) {
            verdict.reasons.insert(RejectReason::trap_item_failed);
        }
        if (slot.kind == SlotKind::trapping && slot.overlay) {
            const auto pos = first_position(slot.items, slot.overlay->item_id);
            if (!pos || ans[*pos] != slot.overlay->score) {
                verdict.reasons.insert(RejectReason::trap_clip_failed);
            }
        }
        if (slot.items.repeat_index && slot.items.repeat_source_index &&
            std::abs(ans[*slot.items.repeat_index] - ans[*slot.items.repeat_source_index]) > th.repeat_tolerance) {
            (th.repeat_check_rejects ? verdict.reasons : verdict.advisories).insert(RejectReason::repeat_inconsistent);
        }
        const double played = sub.playback_s[s];
        if (!(played >= th.playback_min_ratio * slot.clip.duration_s &&
              played <= th.playback_max_ratio * slot.clip.duration_s)) {
            verdict.reasons.insert(RejectReason::playback_duration);
        }
        for (std::size_t p = 0; p < ans.size(); ++p) {
            if (slot.items.trap_index && p == *slot.items.trap_index) {
                continue;
            }
            ++n;
            sum += ans[p];
            sum_sq += static_cast<std::int64_t>(ans[p]) * ans[p];
        }
    }
    if (sub.brightness_outcome == BrightnessStatus::hard_fail) {
        verdict.reasons.insert(RejectReason::brightness_second_failure);
    }
    if (n > 0) {
        // n^2 * population variance, exact in integers.
        const std::int64_t scaled = n * sum_sq - sum * sum;
        const double variance = static_cast<double>(scaled) / static_cast<double>(n * n);
        if (variance <= th.variance_floor) {
            verdict.reasons.insert(RejectReason::low_variance);
        }
    }
    if (sub.verification_code != session.verification_code) {
        verdict.reasons.insert(RejectReason::bad_verification_code);
    }
    return verdict;
}

std::vector<VoteRecord> extract_votes(const Submission& sub, const Session& session, const StudyConfig& config) {
    check_shape(sub, session, config);
    std::vector<VoteRecord> votes;
    for (std::size_t s = 0; s < session.playlist.size(); ++s) {
        const Slot& slot = session.playlist[s];
        if (slot.kind != SlotKind::test) {
            continue;
        }
        for (std::size_t p = 0; p < slot.items.items.size(); ++p) {
            if ((slot.items.trap_index && p == *slot.items.trap_index) ||
                (slot.items.repeat_index && p == *slot.items.repeat_index)) {
                continue;
            }
            votes.push_back({slot.clip.clip_id, slot.clip.model_id, slot.items.items[p], sub.answers[s][p],
                             sub.rater_id, sub.run_id});
        }
    }
    return votes;
}

std::vector<ExtendEntry> extend_list(const StudyConfig& config, const std::map<std::string, int>& accepted_votes) {
    std::vector<ExtendEntry> out;
    for (const auto& clip : config.clips) {
        const auto it = accepted_votes.find(clip.clip_id);
        const int got = it == accepted_votes.end() ? 0 : it->second;
        if (got < config.min_accepted_votes) {
            out.push_back({clip.clip_id, got, config.min_accepted_votes - got});
        }
    }
    return out;
}

std::map<std::string, int> votes_per_clip(const std::vector<VoteRecord>& votes, const StudyConfig& config) {
    // One vote group per (clip, rater, run) and the first configured item as
    // the group marker, since every group rates every item exactly once.
    std::map<std::string, int> out;
    if (config.items.empty()) {
        return out;
    }
    const auto& marker = config.items.front();
    for (const auto& v : votes) {
        if (v.item_id == marker) {
            ++out[v.clip_id];
        }
    }
    return out;
}

CleanseResult cleanse(std::vector<Submission> subs, const SessionManifest& manifest, const BonusPredicate& bonus) {
    const auto key = [](const Submission& s) {
        return std::tie(s.assignment_id, s.session_id, s.rater_id, s.run_id, s.submitted_at, s.started_at,
                        s.verification_code, s.answers, s.playback_s);
    };
    std::sort(subs.begin(), subs.end(), [&](const Submission& a, const Submission& b) { return key(a) < key(b); });

    const auto& config = manifest.config;
    CleanseResult result;
    auto& report = result.report;
    report.total = subs.size();
    for (const auto& sub : subs) {
        const Session* session = manifest.find(sub.session_id);
        if (session == nullptr) {
            report.unmatched.push_back(sub.assignment_id);
            continue;
        }
        CleansingVerdict verdict;
        try {
            verdict = validate_submission(sub, *session, config);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::MalformedSubmission) {
                throw;
            }
            report.unmatched.push_back(sub.assignment_id);
            continue;
        }
        if (verdict.accepted()) {
            report.accepted.push_back(sub.assignment_id);
            auto votes = extract_votes(sub, *session, config);
            for (const auto& slot : session->playlist) {
                if (slot.kind == SlotKind::test) {
                    ++report.accepted_votes_per_clip[slot.clip.clip_id];
                }
            }
            result.votes.insert(result.votes.end(), votes.begin(), votes.end());
        } else {
            report.rejected.push_back({sub.assignment_id, sub.rater_id, verdict.reasons});
        }
        const bool pays = bonus ? bonus(sub, verdict)
                                : (config.cleansing.bonus == BonusRule::accepted && verdict.accepted());
        if (pays) {
            report.bonus.push_back(sub.assignment_id);
        }
    }
    std::sort(result.votes.begin(), result.votes.end());
    std::sort(report.accepted.begin(), report.accepted.end());
    std::sort(report.bonus.begin(), report.bonus.end());
    std::sort(report.unmatched.begin(), report.unmatched.end());
    std::sort(report.rejected.begin(), report.rejected.end(), [](const RejectedEntry& a, const RejectedEntry& b) {
        return std::tie(a.assignment_id, a.rater_id, a.reasons) < std::tie(b.assignment_id, b.rater_id, b.reasons);
    });
    report.extend = extend_list(config, report.accepted_votes_per_clip);
    const std::size_t matched = report.accepted.size() + report.rejected.size();
    report.acceptance_rate = matched == 0 ? 0.0 : static_cast<double>(report.accepted.size()) / matched;
    return result;
}

Submission parse_submission(const Json& j) {
    if (!j.is_object()) {
        malformed("submission must be a JSON object");
    }
    try {
        auto sub = j.get<Submission>();
        if (j.contains("brightness_outcome") && j["brightness_outcome"] != "pass" &&
            j["brightness_outcome"] != "hard_fail") {
            malformed("brightness_outcome must be pass or hard_fail");
        }
        return sub;
    } catch (const Json::exception& e) {
        malformed(e.what());
    }
}

std::vector<Submission> read_submissions_jsonl(std::istream& in) {
    std::vector<Submission> subs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = Json::parse(line);
            if (j.is_object() && j.contains("provenance") && !j.contains("answers")) {
                continue;
            }
            subs.push_back(parse_submission(j));
        } catch (const Json::parse_error& e) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return subs;
}

std::string write_submissions_jsonl(const std::vector<Submission>& subs, const Provenance& prov) {
    std::string out = Json{{"provenance", prov.to_json()}}.dump() + "\n";
    for (const auto& s : subs) {
        out += Json(s).dump();
        out += '\n';
    }
    return out;
}

std::string votes_csv(const std::vector<VoteRecord>& votes, const Provenance& prov) {
    std::string out = prov.header_line() + "\nclip_id,model_id,item_id,score,rater_id,run_id\n";
    for (const auto& v : votes) {
        out += csv::join({v.clip_id, v.model_id, v.item_id, std::to_string(v.score), v.rater_id, v.run_id});
        out += '\n';
    }
    return out;
}

VotesFile read_votes_csv(std::istream& in) {
    VotesFile file;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::vector<int> col(6, -1);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        if (line.starts_with('#')) {
            if (!file.provenance) {
                file.provenance = Provenance::parse_header_line(line);
            }
            continue;
        }
        auto fields = csv::split(line);
        if (!header_seen) {
            static const char* names[] = {"clip_id", "model_id", "item_id", "score", "rater_id", "run_id"};
            for (std::size_t c = 0; c < 6; ++c) {
                const auto it = std::find(fields.begin(), fields.end(), names[c]);
                col[c] = it == fields.end() ? -1 : static_cast<int>(it - fields.begin());
            }
            if (col[0] < 0 || col[2] < 0 || col[3] < 0) {
                throw Error(ErrorCode::ParseError, "votes header needs clip_id,item_id,score columns");
            }
            header_seen = true;
            continue;
        }
        const auto get = [&](int c) -> std::string {
            return col[c] >= 0 && static_cast<std::size_t>(col[c]) < fields.size() ? fields[col[c]] : "";
        };
        VoteRecord v{get(0), get(1), get(2), 0, get(4), get(5)};
        const auto score_text = get(3);
        const auto [ptr, ec] = std::from_chars(score_text.data(), score_text.data() + score_text.size(), v.score);
        if (ec != std::errc{} || ptr != score_text.data() + score_text.size()) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": bad score '" + score_text + "'");
        }
        file.votes.push_back(std::move(v));
    }
    return file;
}

Json verdict_json(const CleansingVerdict& verdict) {
    return Json{{"accepted", verdict.accepted()}, {"reasons", verdict.reasons}, {"advisories", verdict.advisories}};
}

Json report_json(const CleansingReport& report, const Provenance& prov) {
    return Json{{"provenance", prov.to_json()},
                {"total", report.total},
                {"acceptance_rate", report.acceptance_rate},
                {"accepted", report.accepted},
                {"rejected", report.rejected},
                {"extend", report.extend},
                {"bonus", report.bonus},
                {"unmatched", report.unmatched},
                {"accepted_votes_per_clip", report.accepted_votes_per_clip}};
}

}  // namespace avqoe
