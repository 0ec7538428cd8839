#include "tomato/labels.hpp"

#include <string>

#include "tomato/error.hpp"

namespace tomato {

const std::array<ClassLabel, kNumClasses>& class_labels() {
    static const std::array<ClassLabel, kNumClasses> labels{{
        {0, "back", "Background", "पृष्ठभूमि"},
        {1, "gmold", "Gray mold", "खैरो दुसी रोग"},
        {2, "canker", "Canker", "क्यान्कर रोग"},
        {3, "lmold", "Leaf mold", "पात दुसी रोग"},
        {4, "plague", "Plague", "प्लेग रोग"},
        {5, "lminer", "Leaf miner", "पात सुरुङ्गे किरा"},
        {6, "whitefly", "Whitefly", "सेतो झिंगा"},
        {7, "lowtemp", "Low temperature", "न्यून तापक्रमको असर"},
        {8, "nutrex", "Nutritional excess or deficiency", "पोषक तत्वको अधिकता वा कमी"},
        {9, "pmildew", "Powdery Mildew", "सेतो दुसी रोग वा खरानी रोग"},
    }};
    return labels;
}

const ClassLabel& label_for_id(int id) {
    if (id < 0 || id >= kNumClasses) {
        throw Error(Errc::contract, "class id out of range: " + std::to_string(id));
    }
    return class_labels()[static_cast<std::size_t>(id)];
}

std::optional<ClassLabel> find_label(std::string_view slug) {
    for (const auto& label : class_labels()) {
        if (label.slug == slug) return label;
    }
    return std::nullopt;
}

}  // namespace tomato
