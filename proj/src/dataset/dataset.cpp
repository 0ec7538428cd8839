#include "tomato/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "tomato/random.hpp"

namespace tomato::data {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::format, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

double parse_decimal(std::string_view tok, const std::string& source, std::size_t line) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw ParseError(source, line, "not a decimal number: '" + std::string(tok) + "'");
    }
    return v;
}

int parse_class(std::string_view tok, const std::string& source, std::size_t line) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw ParseError(source, line, "class id is not an integer: '" + std::string(tok) + "'");
    }
    if (v < 0 || v >= kNumClasses) {
        throw ParseError(source, line, "unknown class id " + std::to_string(v));
    }
    return v;
}

BoundingBox parse_box(std::span<const std::string_view> toks, const std::string& source, std::size_t line) {
    const BoundingBox box{parse_decimal(toks[0], source, line), parse_decimal(toks[1], source, line),
                          parse_decimal(toks[2], source, line), parse_decimal(toks[3], source, line)};
    if (box.cx < 0.0 || box.cx > 1.0 || box.cy < 0.0 || box.cy > 1.0) {
        throw ParseError(source, line, "box center out of range [0,1]");
    }
    if (box.w <= 0.0 || box.w > 1.0 || box.h <= 0.0 || box.h > 1.0) {
        throw ParseError(source, line, "box size out of range (0,1]");
    }
    return box;
}

// Calls fn(tokens, line_no) for each content line, enforcing that blank
// lines only appear at the end.
template <typename Fn>
void for_each_line(std::string_view text, const std::string& source, Fn&& fn) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    std::size_t last = lines.size();
    while (last > 0 && split_ws(lines[last - 1]).empty()) --last;
    for (std::size_t i = 0; i < last; ++i) {
        const auto toks = split_ws(lines[i]);
        if (toks.empty()) throw ParseError(source, i + 1, "blank line before end of file");
        fn(toks, i + 1);
    }
}

std::string format_box(const BoundingBox& b) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f", b.cx, b.cy, b.w, b.h);
    return buf;
}

}  // namespace

std::vector<LabeledBox> parse_annotation_text(std::string_view text, const std::string& source) {
    std::vector<LabeledBox> out;
    for_each_line(text, source, [&](const std::vector<std::string_view>& toks, std::size_t line) {
        if (toks.size() != 5) {
            throw ParseError(source, line, "expected 5 fields, got " + std::to_string(toks.size()));
        }
        const int cls = parse_class(toks[0], source, line);
        out.push_back({cls, parse_box(std::span(toks).subspan(1), source, line)});
    });
    return out;
}

std::vector<LabeledBox> parse_annotations(const fs::path& path) {
    return parse_annotation_text(read_text(path), path.string());
}

std::string serialize_annotations(std::span<const LabeledBox> boxes) {
    std::string out;
    for (const auto& b : boxes) {
        out += std::to_string(b.class_id);
        out += ' ';
        out += format_box(b.box);
        out += '\n';
    }
    return out;
}

void write_annotations(const fs::path& path, std::span<const LabeledBox> boxes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::storage, "cannot write " + path.string());
    out << serialize_annotations(boxes);
}

std::vector<Detection> parse_prediction_text(std::string_view text, const std::string& source) {
    std::vector<Detection> out;
    for_each_line(text, source, [&](const std::vector<std::string_view>& toks, std::size_t line) {
        if (toks.size() != 6) {
            throw ParseError(source, line, "expected 6 fields, got " + std::to_string(toks.size()));
        }
        const int cls = parse_class(toks[0], source, line);
        const auto box = parse_box(std::span(toks).subspan(1, 4), source, line);
        const double score = parse_decimal(toks[5], source, line);
        if (!(score > 0.0 && score <= 1.0)) throw ParseError(source, line, "score out of range (0,1]");
        out.push_back({cls, score, box});
    });
    return out;
}

std::vector<Detection> parse_predictions(const fs::path& path) {
    return parse_prediction_text(read_text(path), path.string());
}

std::string serialize_predictions(std::span<const Detection> dets) {
    std::string out;
    char score[32];
    for (const auto& d : dets) {
        std::snprintf(score, sizeof score, " %.6f\n", d.score);
        out += std::to_string(d.class_id) + ' ' + format_box(d.box) + score;
    }
    return out;
}

bool is_image_file(const fs::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<fs::path> sorted_images(const fs::path& root) {
    auto files = sorted_files(root / "images");
    std::erase_if(files, [](const fs::path& p) { return !is_image_file(p); });
    return files;
}

}  // namespace

DatasetStats compute_stats(const fs::path& root) {
    DatasetStats stats;
    std::map<std::string, fs::path> images_by_stem;
    for (const auto& img : sorted_images(root)) {
        images_by_stem.emplace(img.stem().string(), img);
        ++stats.image_count;
    }
    for (const auto& label : sorted_files(root / "labels")) {
        if (label.extension() != ".txt") continue;
        if (!images_by_stem.count(label.stem().string())) {
            stats.warnings.push_back("orphan annotation (no image): " + label.filename().string());
            continue;
        }
        for (const auto& b : parse_annotations(label)) {
            ++stats.object_counts[static_cast<std::size_t>(b.class_id)];
            ++stats.object_count;
        }
    }
    long max_count = 0, min_nonzero = 0;
    for (long c : stats.object_counts) {
        max_count = std::max(max_count, c);
        if (c > 0 && (min_nonzero == 0 || c < min_nonzero)) min_nonzero = c;
    }
    stats.imbalance_ratio = min_nonzero == 0 ? 0.0 : static_cast<double>(max_count) / static_cast<double>(min_nonzero);
    return stats;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
    const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
    for (double v : r) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(Errc::contract, "split ratios must be non-negative");
    }
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw Error(Errc::contract, "split ratios must sum to 1");

    std::array<std::size_t, 3> sizes{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        sizes[i] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r[i] + 1e-9));
        assigned += sizes[i];
    }
    for (std::size_t i = 0; assigned < n; i = (i + 1) % 3) {
        if (r[i] > 0.0) {
            ++sizes[i];
            ++assigned;
        }
    }
    return sizes;
}

SplitManifests split_dataset(const fs::path& root, const SplitRatios& ratios, std::uint64_t seed) {
    std::vector<std::string> items;
    for (const auto& img : sorted_images(root)) items.push_back(fs::relative(img, root).generic_string());
    const auto sizes = split_sizes(items.size(), ratios);

    Rng rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[rng.below(i)]);
    }

    SplitManifests m;
    const std::array<std::vector<std::string>*, 3> buckets{&m.train, &m.val, &m.test};
    auto it = items.begin();
    for (std::size_t i = 0; i < 3; ++i) {
        const auto k = static_cast<long>(sizes[i]);
        buckets[i]->assign(it, it + k);
        it += k;
        std::sort(buckets[i]->begin(), buckets[i]->end());
    }
    return m;
}

void write_manifests(const fs::path& out_dir, const SplitManifests& m) {
    fs::create_directories(out_dir);
    const std::pair<const char*, const std::vector<std::string>*> files[] = {
        {"train.txt", &m.train}, {"val.txt", &m.val}, {"test.txt", &m.test}};
    for (const auto& [name, list] : files) {
        std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::storage, "cannot write manifest " + (out_dir / name).string());
        for (const auto& p : *list) out << p << '\n';
    }
}

}  // namespace tomato::data
