#include "avqoe/session_builder.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "avqoe/error.hpp"
#include "avqoe/provenance.hpp"
#include "avqoe/rng.hpp"

namespace avqoe {

namespace {

std::string padded(char prefix, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%05zu", prefix, n);
    return buf;
}

std::string token_hex(std::mt19937_64& rng) {
    char buf[40];
    const auto hi = rng();
    const auto lo = rng();
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                  static_cast<unsigned long long>(lo));
    return buf;
}

const char* item_statement(const std::string& id) {
    static const std::map<std::string, const char*> statements{
        {"appropriate", "The person looks appropriate for a work meeting."},
        {"comfortable_interacting", "I would be comfortable interacting with this person in a call."},
        {"comfortable_using", "I would be comfortable using this representation of myself in a call."},
        {"formal", "The person looks formal."},
        {"affinity", "I feel affinity toward this person."},
        {"not_creepy", "The person does not look creepy."},
        {"realistic", "The person looks realistic."},
        {"trust", "I would trust this person."},
        {"resemblance", "The avatar resembles the person in the original video."},
        {"emotion_accuracy", "The avatar represents the emotions of the person accurately."},
    };
    const auto it = statements.find(id);
    return it == statements.end() ? "" : it->second;
}

}  // namespace

InjectedItems inject_items(Template tmpl, const std::vector<std::string>& items,
                           const std::vector<DecoyStatement>& decoy_pool, std::uint64_t seed) {
    InjectedItems out;
    out.items = items;
    if (tmpl == Template::B || decoy_pool.empty() || items.empty()) {
        return out;
    }
    std::mt19937_64 rng(seed);
    const std::size_t n = items.size();

    const auto& decoy = decoy_pool[std::uniform_int_distribution<std::size_t>(0, decoy_pool.size() - 1)(rng)];
    std::size_t trap = std::uniform_int_distribution<std::size_t>(0, n)(rng);
    out.items.insert(out.items.begin() + static_cast<std::ptrdiff_t>(trap), std::string(kTrapItemPrefix) + decoy.id);
    out.trap_statement_id = decoy.id;

    // The source is a real item early enough that its duplicate lands at
    // least two positions later.
    std::vector<std::size_t> sources;
    for (std::size_t i = 0; i + 1 < out.items.size(); ++i) {
        if (i != trap) {
            sources.push_back(i);
        }
    }
    const std::size_t source = sources[std::uniform_int_distribution<std::size_t>(0, sources.size() - 1)(rng)];
    const std::size_t repeat = std::uniform_int_distribution<std::size_t>(source + 2, out.items.size())(rng);
    out.items.insert(out.items.begin() + static_cast<std::ptrdiff_t>(repeat), out.items[source]);
    if (trap >= repeat) {
        ++trap;
    }
    out.trap_index = trap;
    out.repeat_source_index = source;
    out.repeat_index = repeat;
    return out;
}

TrapOverlay make_trapping_sequence(const ClipRef& clip, const TrappingClipSpec& spec) {
    TrapOverlay overlay;
    overlay.item_id = spec.instructed_item_id;
    overlay.score = spec.instructed_score;
    overlay.message = "Attention check: please answer " + std::to_string(spec.instructed_score) + " for \"" +
                      item_statement(spec.instructed_item_id) + "\"";
    if (spec.kind == TrapKind::mid_video_instruction) {
        constexpr double kWindow = 2.0;
        if (clip.duration_s < 6.0) {
            throw Error(ErrorCode::ClipTooShort, "clip " + clip.clip_id + " must last at least 6 s");
        }
        overlay.t0_s = clip.duration_s / 2.0 - kWindow / 2.0;
        overlay.t1_s = clip.duration_s / 2.0 + kWindow / 2.0;
    } else {
        overlay.t0_s = 0.0;
        overlay.t1_s = clip.duration_s;
    }
    return overlay;
}

std::size_t Session::gold_slot() const {
    for (std::size_t i = 0; i < playlist.size(); ++i) {
        if (playlist[i].kind == SlotKind::gold) {
            return i;
        }
    }
    return playlist.size();
}

std::size_t Session::trapping_slot() const {
    for (std::size_t i = 0; i < playlist.size(); ++i) {
        if (playlist[i].kind == SlotKind::trapping) {
            return i;
        }
    }
    return playlist.size();
}

std::vector<Session> build_sessions(const StudyConfig& config, std::uint64_t seed) {
    validate(config);
    const std::size_t n_clips = config.clips.size();
    if (n_clips < static_cast<std::size_t>(kTestSlotsPerSession)) {
        throw Error(ErrorCode::InsufficientClips,
                    std::to_string(n_clips) + " test clips, at least 10 are needed to fill a session");
    }
    if (config.gold_specs.empty()) {
        throw Error(ErrorCode::MissingGoldSpec, "no gold clip defined");
    }
    if (config.trapping_specs.empty()) {
        throw Error(ErrorCode::MissingTrappingSpec, "no trapping clip defined");
    }

    // Gold clips with all their known answers, in first-appearance order.
    std::vector<std::pair<std::string, std::vector<GoldExpectation>>> gold_clips;
    for (const auto& g : config.gold_specs) {
        auto it = std::find_if(gold_clips.begin(), gold_clips.end(), [&](const auto& p) { return p.first == g.clip_id; });
        if (it == gold_clips.end()) {
            gold_clips.push_back({g.clip_id, {}});
            it = std::prev(gold_clips.end());
        }
        it->second.push_back({g.item_id, g.expected_score, g.tolerance});
    }

    std::mt19937_64 plan_rng = substream(seed, ~std::uint64_t{0});
    std::vector<std::size_t> order(n_clips);
    for (std::size_t i = 0; i < n_clips; ++i) {
        order[i] = i;
    }
    std::shuffle(order.begin(), order.end(), plan_rng);

    const std::size_t total_slots = n_clips * static_cast<std::size_t>(config.target_votes_per_clip);
    const std::size_t n_sessions = (total_slots + kTestSlotsPerSession - 1) / kTestSlotsPerSession;

    std::vector<Session> sessions;
    sessions.reserve(n_sessions);
    for (std::size_t s = 0; s < n_sessions; ++s) {
        Session session;
        session.session_id = padded('S', s + 1);
        session.assignment_id = padded('A', s + 1);
        auto rng = substream(seed, s);
        session.rng_seed = rng();
        session.verification_code = token_hex(rng);

        // Round-robin over a seeded permutation == least-served-first with a
        // fixed tie-break; consecutive positions are distinct while N >= 10.
        for (int k = 0; k < kTestSlotsPerSession; ++k) {
            Slot slot;
            slot.kind = SlotKind::test;
            slot.clip = config.clips[order[(s * kTestSlotsPerSession + static_cast<std::size_t>(k)) % n_clips]];
            session.playlist.push_back(std::move(slot));
        }

        const auto& gold = gold_clips[std::uniform_int_distribution<std::size_t>(0, gold_clips.size() - 1)(rng)];
        Slot gold_slot;
        gold_slot.kind = SlotKind::gold;
        gold_slot.clip = *config.find_clip(gold.first);
        gold_slot.gold = gold.second;
        session.playlist.push_back(std::move(gold_slot));

        const auto& trap =
            config.trapping_specs[std::uniform_int_distribution<std::size_t>(0, config.trapping_specs.size() - 1)(rng)];
        Slot trap_slot;
        trap_slot.kind = SlotKind::trapping;
        trap_slot.clip = *config.find_clip(trap.clip_id);
        trap_slot.overlay = make_trapping_sequence(trap_slot.clip, trap);
        session.playlist.push_back(std::move(trap_slot));

        std::shuffle(session.playlist.begin(), session.playlist.end(), rng);

        for (auto& slot : session.playlist) {
            slot.items = inject_items(config.tmpl, config.items, config.decoy_pool, rng());
            if (slot.items.trap_index) {
                const auto& id = slot.items.trap_statement_id;
                const auto it = std::find_if(config.decoy_pool.begin(), config.decoy_pool.end(),
                                             [&](const DecoyStatement& d) { return d.id == id; });
                slot.trap_expected_score = it->expected_score(config.scale_points);
            }
        }
        sessions.push_back(std::move(session));
    }
    return sessions;
}

Json public_payload(const Session& session, const StudyConfig& config) {
    Json playlist = Json::array();
    for (std::size_t i = 0; i < session.playlist.size(); ++i) {
        const auto& slot = session.playlist[i];
        Json statements = Json::array();
        for (const auto& id : slot.items.items) {
            std::string text;
            if (id.starts_with(kTrapItemPrefix)) {
                const auto decoy_id = id.substr(kTrapItemPrefix.size());
                for (const auto& d : config.decoy_pool) {
                    if (d.id == decoy_id) {
                        text = d.text;
                    }
                }
            } else {
                text = item_statement(id);
            }
            statements.push_back(Json{{"text", text}});
        }
        Json entry{{"slot", i},
                   {"url", slot.clip.url},
                   {"duration_s", slot.clip.duration_s},
                   {"has_audio", slot.clip.has_audio},
                   {"statements", std::move(statements)}};
        if (config.tmpl == Template::B && slot.clip.reference_url) {
            entry["reference_url"] = *slot.clip.reference_url;
        }
        playlist.push_back(std::move(entry));
    }
    return Json{{"session_id", session.session_id},
                {"assignment_id", session.assignment_id},
                {"verification_code", session.verification_code},
                {"template", config.tmpl},
                {"method", config.method},
                {"scale_points", config.scale_points},
                {"playlist", std::move(playlist)}};
}

std::vector<Section> schedule_sections(const RaterHistory& history, std::int64_t now, int recurrence_min) {
    const std::int64_t interval = static_cast<std::int64_t>(recurrence_min) * 60;
    const auto due = [&](const std::optional<std::int64_t>& last) { return !last || now - *last > interval; };

    std::vector<Section> sections;
    if (!history.qualified) {
        sections.push_back(Section::qualification);
        sections.push_back(Section::calibration);
    }
    sections.push_back(Section::instructions);
    if (due(history.last_setup_at)) {
        sections.push_back(Section::setup);
    }
    if (due(history.last_training_at)) {
        sections.push_back(Section::training);
    }
    sections.push_back(Section::rating);
    return sections;
}

const Session* SessionManifest::find(const std::string& session_id) const {
    for (const auto& s : sessions) {
        if (s.session_id == session_id) {
            return &s;
        }
    }
    return nullptr;
}

Json to_json(const SessionManifest& manifest) {
    const Provenance prov{config_hash(manifest.config), manifest.seed};
    return Json{{"provenance", prov.to_json()},
                {"config", manifest.config},
                {"seed", manifest.seed},
                {"sessions", manifest.sessions}};
}

SessionManifest manifest_from_json(const Json& j) {
    SessionManifest m;
    try {
        m.config = j.at("config").get<StudyConfig>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.sessions = j.at("sessions").get<std::vector<Session>>();
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("session manifest: ") + e.what());
    }
    return m;
}

SessionManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path);
    }
    try {
        return manifest_from_json(Json::parse(in));
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
}

std::string assignment_csv(const SessionManifest& manifest) {
    const Provenance prov{config_hash(manifest.config), manifest.seed};
    std::ostringstream out;
    out << prov.header_line() << '\n' << "assignment_id,session_id,public_url\n";
    for (const auto& s : manifest.sessions) {
        out << s.assignment_id << ',' << s.session_id << ',' << manifest.config.public_base_url
            << "?assignment_id=" << s.assignment_id << "&session_id=" << s.session_id << '\n';
    }
    return out.str();
}

}  // namespace avqoe
