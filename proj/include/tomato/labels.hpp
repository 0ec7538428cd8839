#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace tomato {

inline constexpr int kNumClasses = 10;

struct ClassLabel {
    int id;
    std::string_view slug;
    std::string_view name_en;
    std::string_view name_ne;
};

// Indexed by class id. Id 0 is the annotated background class.
const std::array<ClassLabel, kNumClasses>& class_labels();

const ClassLabel& label_for_id(int id);  // throws Error(contract) when out of range
std::optional<ClassLabel> find_label(std::string_view slug);

inline constexpr std::string_view kBackgroundSlug = "back";

}  // namespace tomato
