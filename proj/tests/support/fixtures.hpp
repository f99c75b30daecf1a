#pragma once

// Study configs and helpers shared by unit and acceptance tests.

#include <cstdio>
#include <functional>
#include <filesystem>
#include <random>
#include <string>

#include "avqoe/study.hpp"

namespace avqoe::testing {

struct StudyShape {
    int models = 10;
    int clips_per_model = 4;
    int votes_per_clip = 30;
    int min_accepted = 15;
    bool qualification = false;
    Template tmpl = Template::A;
    double duration_s = 10.0;
};

inline StudyConfig make_study(const StudyShape& shape = {}) {
    StudyConfig c;
    c.name = "fixture";
    c.tmpl = shape.tmpl;
    c.items = shape.tmpl == Template::A ? template_a_items() : template_b_items();
    static const int views[] = {0, 45, 90};
    for (int m = 0; m < shape.models; ++m) {
        for (int k = 0; k < shape.clips_per_model; ++k) {
            ClipRef clip;
            char id[16];
            std::snprintf(id, sizeof id, "c%03d", m * shape.clips_per_model + k + 1);
            clip.clip_id = id;
            clip.url = "https://cdn.example.invalid/" + clip.clip_id + ".mp4";
            clip.duration_s = shape.duration_s;
            char model[16];
            std::snprintf(model, sizeof model, "m%02d", m + 1);
            clip.model_id = model;
            clip.viewpoint_deg = views[k % 3];
            if (shape.tmpl == Template::B) {
                clip.reference_url = "https://cdn.example.invalid/ref/" + clip.clip_id + ".mp4";
            }
            c.clips.push_back(clip);
        }
    }
    const auto control = [&](const std::string& id) {
        ClipRef clip;
        clip.clip_id = id;
        // Opaque names: the URL must not reveal the slot role.
        clip.url = "https://cdn.example.invalid/x" + std::to_string(std::hash<std::string>{}(id) % 100000) + ".mp4";
        clip.duration_s = shape.duration_s;
        clip.model_id = id;
        if (shape.tmpl == Template::B) {
            clip.reference_url = clip.url + ".ref.mp4";
        }
        return clip;
    };
    c.control_clips = {control("gold01"), control("trap01"), control("train01")};
    const std::string item = shape.tmpl == Template::A ? "realistic" : "resemblance";
    c.gold_specs = {{"gold01", item, 1, 1}};
    c.trapping_specs = {{"trap01", TrapKind::rendered_message, item, 2}};
    c.training_clips = {"train01"};
    c.target_votes_per_clip = shape.votes_per_clip;
    c.min_accepted_votes = shape.min_accepted;
    c.qualification.required = shape.qualification;
    c.qualification.ishihara_keys = {{"3", "6"}, {"4", "29"}};
    c.qualification.ishihara_urls = {{"3", "https://cdn.example.invalid/q/3.png"},
                                     {"4", "https://cdn.example.invalid/q/4.png"}};
    return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("avqoe-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace avqoe::testing

#include "avqoe/cleansing.hpp"

namespace avqoe::testing {

/// A submission that satisfies every check of `session`, with test answers
/// drawn uniformly from the scale.
inline Submission perfect_submission(const Session& session, const StudyConfig& config, std::uint64_t seed,
                                     const std::string& rater = "rater") {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> score(1, config.scale_points);
    Submission sub;
    sub.assignment_id = session.assignment_id;
    sub.session_id = session.session_id;
    sub.rater_id = rater;
    sub.verification_code = session.verification_code;
    sub.run_id = "run1";
    for (const auto& slot : session.playlist) {
        std::vector<int> answers(slot.items.items.size());
        for (std::size_t i = 0; i < answers.size(); ++i) {
            answers[i] = score(rng);
            for (const auto& g : slot.gold) {
                if (slot.items.items[i] == g.item_id) {
                    answers[i] = g.expected_score;
                }
            }
            if (slot.overlay && slot.items.items[i] == slot.overlay->item_id) {
                answers[i] = slot.overlay->score;
            }
        }
        if (slot.items.trap_index) {
            answers[*slot.items.trap_index] = slot.trap_expected_score;
        }
        if (slot.items.repeat_index) {
            answers[*slot.items.repeat_index] = answers[*slot.items.repeat_source_index];
        }
        sub.answers.push_back(std::move(answers));
        sub.playback_s.push_back(slot.clip.duration_s * 1.1);
    }
    sub.started_at = 1700000000;
    sub.submitted_at = 1700000600;
    return sub;
}

}  // namespace avqoe::testing
