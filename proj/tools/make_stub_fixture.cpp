// Regenerates data/stub: two synthetic leaf images and the stub fixture that
// maps their letterboxed hashes to hand-placed logits.
//
//   make_stub_fixture <out_dir>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tomato/inference.hpp"

using namespace tomato;
using namespace tomato::infer;

namespace {

constexpr int kInput = 640;
constexpr int kGrid = 8;
const Anchor kAnchor{0.25, 0.2};

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Smooth green field with darker blotches, deterministic per (w, h, seed).
Image leaf(int w, int h, int seed) {
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) / w;
            const double v = static_cast<double>(y) / h;
            const double vein = 0.5 + 0.5 * std::sin(18.0 * u + 7.0 * v + seed);
            const double spot = std::exp(-(std::pow(u - 0.44, 2) + std::pow(v - 0.58, 2)) * 60.0);
            img.at(x, y, 0) = static_cast<std::uint8_t>(std::lround(40 + 60 * spot + 20 * vein));
            img.at(x, y, 1) = static_cast<std::uint8_t>(std::lround(150 - 70 * spot + 40 * vein));
            img.at(x, y, 2) = static_cast<std::uint8_t>(std::lround(35 + 25 * vein));
        }
    }
    return img;
}

struct Cell {
    int gx, gy;
    float tx, obj;
    int class_id;
    float class_logit;
};

// Writes one anchor cell: box offsets tx (ty = tw = th = 0), objectness and a
// single strong class against -4 elsewhere.
void place(HeadScale& h, const Cell& c) {
    float* p = h.logits.data() + h.offset(c.gx, c.gy, 0);
    p[0] = c.tx;
    p[1] = p[2] = p[3] = 0.0f;
    p[4] = c.obj;
    for (int k = 0; k < kNumClasses; ++k) p[5 + k] = k == c.class_id ? c.class_logit : -4.0f;
}

// The detection a placed cell decodes to, computed from the head equations
// rather than through decode_head.
Detection expected_of(const Cell& c) {
    const double s0 = 2.0 * sig(0.0);
    return {c.class_id, sig(c.obj) * sig(c.class_logit),
            {(2.0 * sig(c.tx) - 0.5 + c.gx) / kGrid, (s0 - 0.5 + c.gy) / kGrid,
             kAnchor.w * s0 * s0, kAnchor.h * s0 * s0}};
}

Detection to_original(Detection d, const LetterboxMapping& m) {
    d.box.cx = (d.box.cx * m.dst_w - m.pad_x) / m.resized_w;
    d.box.cy = (d.box.cy * m.dst_h - m.pad_y) / m.resized_h;
    d.box.w = d.box.w * m.dst_w / m.resized_w;
    d.box.h = d.box.h * m.dst_h / m.resized_h;
    return d;
}

FixtureEntry make_entry(const StubFixture& f, const std::string& name, const Image& img,
                        const std::vector<Cell>& cells, const std::vector<std::size_t>& survivors) {
    FixtureEntry e;
    e.name = name;
    e.image = name + ".png";
    const auto m = letterbox(img.width, img.height, kInput, kInput);
    e.image_hash = content_hash(letterbox_image(img, m));
    e.heads = f.background_heads();
    for (const auto& c : cells) place(e.heads[0], c);
    for (auto i : survivors) {
        e.expected.push_back(expected_of(cells[i]));
        e.expected_original.push_back(to_original(expected_of(cells[i]), m));
    }
    return e;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: %s <out_dir>\n", argv[0]);
        return 2;
    }
    const std::filesystem::path out = argv[1];
    std::filesystem::create_directories(out);

    StubFixture f;
    f.descriptor.model_version = "stub-1";
    f.descriptor.input_w = kInput;
    f.descriptor.input_h = kInput;
    f.descriptor.scales = {{kGrid, kGrid, {kAnchor}}};

    // A: 800x600, letterboxed with scale 0.8 and 80 px of padding top and
    // bottom. One gray-mold cell.
    const Image a = leaf(800, 600, 1);
    f.entries.push_back(make_entry(f, "image_a", a, {{3, 4, 0.0f, 6.0f, 1, 4.0f}}, {0}));

    // B: square, so model and source coordinates coincide. Two overlapping
    // canker cells of which NMS keeps the stronger, plus one whitefly cell.
    const Image b = leaf(640, 640, 2);
    f.entries.push_back(make_entry(
        f, "image_b", b,
        {{1, 1, 0.0f, 5.0f, 2, 4.0f}, {2, 1, -2.0f, 3.0f, 2, 4.0f}, {6, 2, 0.0f, 2.0f, 6, 3.0f}}, {0, 2}));

    write_png(out / "image_a.png", a);
    write_png(out / "image_b.png", b);
    std::ofstream(out / "fixture.json", std::ios::binary) << to_json(f).dump(1) << "\n";
    std::printf("wrote %s\n", (out / "fixture.json").string().c_str());
    return 0;
}
