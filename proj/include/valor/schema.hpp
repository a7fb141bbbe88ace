#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace valor {

// Class ids are positions in these arrays.
struct LabelSchema {
    static constexpr int kAspects = 6;
    static constexpr int kSeverities = 4;

    static constexpr std::array<std::string_view, kAspects> aspects = {
        "Software", "Quality", "Hardware", "Service", "Price", "Packaging"};
    static constexpr std::array<std::string_view, kSeverities> severities = {
        "No Explicit Reproach", "Disapproval", "Blame", "Accusation"};

    static std::optional<int> aspect_id(std::string_view name)
    {
        for (int i = 0; i < kAspects; ++i)
            if (aspects[i] == name)
                return i;
        return std::nullopt;
    }
    static std::optional<int> severity_id(std::string_view name)
    {
        for (int i = 0; i < kSeverities; ++i)
            if (severities[i] == name)
                return i;
        return std::nullopt;
    }
};

enum class Task { Aspect = 0, Severity = 1 };

inline int class_count(Task t)
{
    return t == Task::Aspect ? LabelSchema::kAspects : LabelSchema::kSeverities;
}

inline std::string_view task_name(Task t)
{
    return t == Task::Aspect ? "aspect" : "severity";
}

// Keyword lexicon of the synthetic corpus. Every word here is part of the
// fixed synthetic vocabulary.
namespace lexicon {

inline constexpr std::array<std::array<std::string_view, 3>, LabelSchema::kAspects> aspect_words = {{
    {"update", "app", "bug"},
    {"flimsy", "cheap", "defective"},
    {"battery", "screen", "charger"},
    {"support", "rude", "waiting"},
    {"expensive", "overcharged", "refund"},
    {"box", "damaged", "parcel"},
}};

inline constexpr std::array<std::array<std::string_view, 3>, LabelSchema::kSeverities> severity_words = {{
    {"wondering", "noticed", "question"},
    {"disappointed", "unhappy", "annoyed"},
    {"fault", "blame", "responsible"},
    {"scam", "fraud", "lied"},
}};

inline constexpr std::array<std::string_view, 8> agent_words = {
    "sorry", "help", "please", "team", "dm", "details", "assist", "thanks"};

inline constexpr std::array<std::string_view, 2> speakers = {"customer", "agent"};

} // namespace lexicon

} // namespace valor
