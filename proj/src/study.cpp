#include "avqoe/study.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "avqoe/error.hpp"
#include "avqoe/provenance.hpp"

namespace avqoe {

const std::vector<std::string>& template_a_items() {
    static const std::vector<std::string> items{"appropriate", "comfortable_interacting", "comfortable_using",
                                                "formal",      "affinity",                "not_creepy",
                                                "realistic",   "trust"};
    return items;
}

const std::vector<std::string>& template_b_items() {
    static const std::vector<std::string> items{"resemblance", "emotion_accuracy"};
    return items;
}

int DecoyStatement::expected_score(int scale_points) const {
    switch (answer) {
        case DecoyAnswer::scale_min: return 1;
        case DecoyAnswer::scale_mid: return (scale_points + 1) / 2;
        case DecoyAnswer::scale_max: return scale_points;
    }
    return 1;
}

const std::vector<DecoyStatement>& default_decoy_pool() {
    static const std::vector<DecoyStatement> pool{
        {"cannot_read_english", "I cannot read text in English.", DecoyAnswer::scale_min},
        {"select_strongly_agree", "Please select 'Strongly agree' for this statement.", DecoyAnswer::scale_max},
        {"select_strongly_disagree", "Please select 'Strongly disagree' for this statement.",
         DecoyAnswer::scale_min},
        {"select_neutral", "Please select the middle option for this statement.", DecoyAnswer::scale_mid},
        {"saw_no_video", "I did not see any video in this task.", DecoyAnswer::scale_min},
        {"never_used_screen", "I have never used a computer or phone screen.", DecoyAnswer::scale_min},
    };
    return pool;
}

const ClipRef* StudyConfig::find_clip(const std::string& clip_id) const {
    for (const auto* list : {&clips, &control_clips}) {
        for (const auto& c : *list) {
            if (c.clip_id == clip_id) {
                return &c;
            }
        }
    }
    return nullptr;
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

bool in_scale(int score, int scale_points) { return score >= 1 && score <= scale_points; }

}  // namespace

void validate(const StudyConfig& config) {
    if (config.scale_points != 5 && config.scale_points != 9) {
        invalid("scale_points must be 5 or 9");
    }
    const auto& expected_items = config.tmpl == Template::A ? template_a_items() : template_b_items();
    {
        const std::set<std::string> got(config.items.begin(), config.items.end());
        const std::set<std::string> want(expected_items.begin(), expected_items.end());
        if (got != want || config.items.size() != expected_items.size()) {
            invalid(std::string("Template ") + (config.tmpl == Template::A ? "A" : "B") + " requires exactly " +
                    std::to_string(expected_items.size()) + " distinct dimensions");
        }
    }
    const auto has_item = [&](const std::string& id) {
        return std::find(config.items.begin(), config.items.end(), id) != config.items.end();
    };

    std::set<std::string> ids;
    for (const auto* list : {&config.clips, &config.control_clips}) {
        for (const auto& c : *list) {
            if (c.clip_id.empty()) {
                invalid("clip with empty clip_id");
            }
            if (!ids.insert(c.clip_id).second) {
                invalid("duplicate clip_id " + c.clip_id);
            }
            if (!(c.duration_s > 0.0)) {
                invalid("clip " + c.clip_id + " needs a positive duration");
            }
            if (c.viewpoint_deg != 0 && c.viewpoint_deg != 45 && c.viewpoint_deg != 90) {
                invalid("clip " + c.clip_id + " viewpoint must be 0, 45 or 90");
            }
        }
    }
    if (config.tmpl == Template::B) {
        for (const auto& c : config.clips) {
            if (!c.reference_url || c.reference_url->empty()) {
                invalid("Template B clip " + c.clip_id + " has no reference_url");
            }
        }
    }
    for (const auto& g : config.gold_specs) {
        if (config.find_clip(g.clip_id) == nullptr) {
            invalid("gold spec references unknown clip " + g.clip_id);
        }
        if (!has_item(g.item_id)) {
            invalid("gold spec item " + g.item_id + " is not in the item list");
        }
        if (!in_scale(g.expected_score, config.scale_points) || g.tolerance < 0) {
            invalid("gold spec for " + g.clip_id + " has an out-of-scale score or negative tolerance");
        }
    }
    for (const auto& t : config.trapping_specs) {
        if (config.find_clip(t.clip_id) == nullptr) {
            invalid("trapping spec references unknown clip " + t.clip_id);
        }
        if (t.kind == TrapKind::mid_video_instruction && config.tmpl != Template::B) {
            invalid("mid_video_instruction trapping clips are Template B only");
        }
        if (!has_item(t.instructed_item_id) || !in_scale(t.instructed_score, config.scale_points)) {
            invalid("trapping spec for " + t.clip_id + " instructs an unknown item or out-of-scale score");
        }
    }
    for (const auto& id : config.training_clips) {
        if (config.find_clip(id) == nullptr) {
            invalid("training clip " + id + " is not defined");
        }
    }
    if (config.min_accepted_votes < 1 || config.target_votes_per_clip < config.min_accepted_votes) {
        invalid("need target_votes_per_clip >= min_accepted_votes >= 1");
    }
    if (config.tmpl == Template::A && config.decoy_pool.empty()) {
        invalid("Template A needs a non-empty decoy pool");
    }
    const auto& cl = config.cleansing;
    if (cl.repeat_tolerance < 0 || cl.playback_min_ratio < 0.0 || cl.playback_max_ratio < cl.playback_min_ratio ||
        cl.variance_floor < 0.0) {
        invalid("cleansing thresholds are inconsistent");
    }
    if (config.section_recurrence_min <= 0 || config.max_sessions_per_rater < 0) {
        invalid("section_recurrence_min must be positive and max_sessions_per_rater non-negative");
    }
    const auto& q = config.qualification;
    if (q.required) {
        if (!q.ishihara_keys.contains("3") || !q.ishihara_keys.contains("4")) {
            invalid("qualification needs Ishihara keys for plates 3 and 4");
        }
        if (q.landolt.row_acuities.empty() || !(q.landolt.pass_acuity > 0.0)) {
            invalid("Landolt schedule needs rows and a positive pass acuity");
        }
        for (double a : q.landolt.row_acuities) {
            if (!(a > 0.0)) {
                invalid("Landolt row acuities must be positive");
            }
        }
        if (!q.blur_assets.empty() && q.blur_assets.size() < 3) {
            invalid("blurred-pair test needs at least 3 image assets");
        }
        if (q.blur_pass_threshold < 0 || q.blur_pass_threshold > 3) {
            invalid("blur_pass_threshold must be within [0, 3]");
        }
        if (q.brightness_band.min_delta < 1 || q.brightness_band.max_delta < q.brightness_band.min_delta ||
            q.brightness_band.max_delta > 30) {
            invalid("brightness contrast band must satisfy 1 <= min <= max <= 30");
        }
    }
}

void to_json(Json& j, const StudyConfig& c) {
    j = Json{{"name", c.name},
             {"template", c.tmpl},
             {"method", c.method},
             {"scale_points", c.scale_points},
             {"items", c.items},
             {"clips", c.clips},
             {"control_clips", c.control_clips},
             {"gold_specs", c.gold_specs},
             {"trapping_specs", c.trapping_specs},
             {"training_clips", c.training_clips},
             {"decoy_pool", c.decoy_pool},
             {"target_votes_per_clip", c.target_votes_per_clip},
             {"min_accepted_votes", c.min_accepted_votes},
             {"cleansing", c.cleansing},
             {"section_recurrence_min", c.section_recurrence_min},
             {"max_sessions_per_rater", c.max_sessions_per_rater},
             {"qualification", c.qualification},
             {"public_base_url", c.public_base_url}};
}

void from_json(const Json& j, StudyConfig& c) {
    if (!j.is_object()) {
        invalid("study config must be a JSON object");
    }
    try {
        read_optional(j, "name", c.name);
        read_optional(j, "template", c.tmpl);
        read_optional(j, "method", c.method);
        read_optional(j, "scale_points", c.scale_points);
        read_optional(j, "items", c.items);
        if (c.items.empty()) {
            c.items = c.tmpl == Template::A ? template_a_items() : template_b_items();
        }
        read_optional(j, "clips", c.clips);
        read_optional(j, "control_clips", c.control_clips);
        read_optional(j, "gold_specs", c.gold_specs);
        read_optional(j, "trapping_specs", c.trapping_specs);
        read_optional(j, "training_clips", c.training_clips);
        read_optional(j, "decoy_pool", c.decoy_pool);
        read_optional(j, "target_votes_per_clip", c.target_votes_per_clip);
        read_optional(j, "min_accepted_votes", c.min_accepted_votes);
        read_optional(j, "cleansing", c.cleansing);
        read_optional(j, "section_recurrence_min", c.section_recurrence_min);
        read_optional(j, "max_sessions_per_rater", c.max_sessions_per_rater);
        read_optional(j, "qualification", c.qualification);
        read_optional(j, "public_base_url", c.public_base_url);
    } catch (const Json::exception& e) {
        invalid(e.what());
    }
    if (j.contains("template") && j["template"] != "A" && j["template"] != "B") {
        invalid("template must be \"A\" or \"B\"");
    }
}

std::string config_hash(const StudyConfig& config) { return sha256_hex(Json(config).dump()); }

StudyConfig load_study_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::InvalidConfig, "cannot open " + path);
    }
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        invalid(path + ": " + e.what());
    }
    return j.get<StudyConfig>();
}

}  // namespace avqoe
