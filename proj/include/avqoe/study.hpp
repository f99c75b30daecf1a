#pragma once

// Declarative study description: rating template and scale, clip inventory,
// gold/trapping specs, vote targets, cleansing thresholds and qualification
// settings. The JSON schema is documented in docs/formats.md.

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avqoe/json_support.hpp"
#include "avqoe/qualification.hpp"

namespace avqoe {

enum class Template { A, B };
enum class RatingMethod { ACR, ACR_HR, DCR, CCR };

/// Template A dimensions in questionnaire order.
const std::vector<std::string>& template_a_items();
/// Template B dimensions in questionnaire order.
const std::vector<std::string>& template_b_items();

struct ClipRef {
    std::string clip_id;
    std::string url;
    double duration_s = 0.0;
    std::string model_id;
    int viewpoint_deg = 0;
    std::optional<std::string> reference_url;
    bool has_audio = true;

    bool operator==(const ClipRef&) const = default;
};

struct GoldSpec {
    std::string clip_id;
    std::string item_id;
    int expected_score = 0;
    int tolerance = 1;

    bool operator==(const GoldSpec&) const = default;
};

enum class TrapKind { rendered_message, mid_video_instruction };

struct TrappingClipSpec {
    std::string clip_id;
    TrapKind kind = TrapKind::rendered_message;
    std::string instructed_item_id;
    int instructed_score = 1;

    bool operator==(const TrappingClipSpec&) const = default;
};

/// Which end of the scale an attentive reader picks for a decoy statement.
enum class DecoyAnswer { scale_min, scale_mid, scale_max };

struct DecoyStatement {
    std::string id;
    std::string text;
    DecoyAnswer answer = DecoyAnswer::scale_min;

    int expected_score(int scale_points) const;
    bool operator==(const DecoyStatement&) const = default;
};

/// The shipped six-statement trap pool.
const std::vector<DecoyStatement>& default_decoy_pool();

enum class BonusRule { accepted, none };

struct CleansingThresholds {
    int repeat_tolerance = 1;
    bool repeat_check_rejects = true;
    double playback_min_ratio = 0.95;
    double playback_max_ratio = 3.0;
    /// Submissions whose non-trap answer variance is <= this floor are rejected.
    double variance_floor = 0.0;
    BonusRule bonus = BonusRule::accepted;

    bool operator==(const CleansingThresholds&) const = default;
};

struct BlurAsset {
    std::string id;
    std::string sharp_url;
    std::string blurred_url;

    bool operator==(const BlurAsset&) const = default;
};

struct QualificationConfig {
    bool required = true;
    qualification::DeviceRequirements device;
    qualification::LandoltSchedule landolt;
    /// plate id ("3" or "4") -> expected numeral for normal colour vision
    std::map<std::string, std::string> ishihara_keys;
    std::map<std::string, std::string> ishihara_urls;
    qualification::ContrastBand brightness_band;
    std::vector<BlurAsset> blur_assets;
    int blur_pass_threshold = 2;
    bool blur_gates = true;

    bool operator==(const QualificationConfig&) const = default;
};

struct StudyConfig {
    std::string name;
    Template tmpl = Template::A;
    RatingMethod method = RatingMethod::ACR;
    int scale_points = 5;
    std::vector<std::string> items;
    std::vector<ClipRef> clips;
    /// Gold, trapping and training clips referenced by id from the specs.
    std::vector<ClipRef> control_clips;
    std::vector<GoldSpec> gold_specs;
    std::vector<TrappingClipSpec> trapping_specs;
    std::vector<std::string> training_clips;
    std::vector<DecoyStatement> decoy_pool = default_decoy_pool();
    int target_votes_per_clip = 30;
    int min_accepted_votes = 15;
    CleansingThresholds cleansing;
    int section_recurrence_min = 60;
    /// 0 means unlimited.
    int max_sessions_per_rater = 0;
    QualificationConfig qualification;
    std::string public_base_url = "https://example.invalid/rate";

    const ClipRef* find_clip(const std::string& clip_id) const;

    bool operator==(const StudyConfig&) const = default;
};

/// Throws Error(InvalidConfig) describing the first violated invariant.
void validate(const StudyConfig& config);

/// SHA-256 over the canonical JSON serialization.
std::string config_hash(const StudyConfig& config);

StudyConfig load_study_config(const std::string& path);

NLOHMANN_JSON_SERIALIZE_ENUM(Template, {{Template::A, "A"}, {Template::B, "B"}})
NLOHMANN_JSON_SERIALIZE_ENUM(RatingMethod, {{RatingMethod::ACR, "ACR"},
                                            {RatingMethod::ACR_HR, "ACR_HR"},
                                            {RatingMethod::DCR, "DCR"},
                                            {RatingMethod::CCR, "CCR"}})
NLOHMANN_JSON_SERIALIZE_ENUM(TrapKind, {{TrapKind::rendered_message, "rendered_message"},
                                        {TrapKind::mid_video_instruction, "mid_video_instruction"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DecoyAnswer, {{DecoyAnswer::scale_min, "scale_min"},
                                           {DecoyAnswer::scale_mid, "scale_mid"},
                                           {DecoyAnswer::scale_max, "scale_max"}})
NLOHMANN_JSON_SERIALIZE_ENUM(BonusRule, {{BonusRule::accepted, "accepted"}, {BonusRule::none, "none"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ClipRef, clip_id, url, duration_s, model_id, viewpoint_deg,
                                                reference_url, has_audio)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GoldSpec, clip_id, item_id, expected_score, tolerance)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrappingClipSpec, clip_id, kind, instructed_item_id,
                                                instructed_score)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DecoyStatement, id, text, answer)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CleansingThresholds, repeat_tolerance, repeat_check_rejects,
                                                playback_min_ratio, playback_max_ratio, variance_floor, bonus)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BlurAsset, id, sharp_url, blurred_url)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(QualificationConfig, required, device, landolt, ishihara_keys,
                                                ishihara_urls, brightness_band, blur_assets, blur_pass_threshold,
                                                blur_gates)
void to_json(Json& j, const StudyConfig& config);
void from_json(const Json& j, StudyConfig& config);

}  // namespace avqoe
