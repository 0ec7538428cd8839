// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "server_harness.hpp"
#include "tomato/augment.hpp"
#include "tomato/dataset.hpp"
#include "tomato/evaluation.hpp"
#include "tomato/inference.hpp"
#include "tomato/knowledge_base.hpp"

using namespace tomato;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Collects the first few failure reasons of one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (ok) return;
        ++failed_;
        if (failed_ <= 3) notes_ << (failed_ > 1 ? "; " : "") << what;
    }
    bool ok() const { return failed_ == 0; }
    std::string summary() const {
        std::ostringstream s;
        s << total_ - failed_ << "/" << total_ << " checks";
        if (failed_) s << ": " << notes_.str();
        return s.str();
    }

private:
    long total_ = 0;
    long failed_ = 0;
    std::ostringstream notes_;
};

using Seconds = std::chrono::duration<double>;

BoundingBox random_box(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x1 = u(rng) * 0.9, y1 = u(rng) * 0.9;
    const double x2 = x1 + 0.01 + u(rng) * (1.0 - x1 - 0.01);
    const double y2 = y1 + 0.01 + u(rng) * (1.0 - y1 - 0.01);
    return BoundingBox::from_corners(x1, y1, x2, y2);
}

BoundingBox cell_box(int i) { return {0.05 + 0.1 * i, 0.05 + 0.1 * i, 0.08, 0.08}; }

AnnotatedImage random_annotated(std::mt19937_64& rng, int w, int h, int nboxes) {
    std::uniform_int_distribution<int> px(0, 255), cls(0, 9);
    AnnotatedImage img{Image(w, h), {}};
    for (auto& p : img.image.pixels) p = static_cast<std::uint8_t>(px(rng));
    for (int i = 0; i < nboxes; ++i) img.boxes.push_back({cls(rng), random_box(rng)});
    return img;
}

// ---------------------------------------------------------------------------

void geometry(Check& c) {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    constexpr int grid = 64;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto a = oracle::random_grid_box(rng, grid);
        const auto b = oracle::random_grid_box(rng, grid);
        worst = std::max(worst, std::abs(iou(a.normalized(grid), b.normalized(grid)) - oracle::rasterized_iou(a, b, grid)));
    }
    c.expect(worst < 1e-6, "IoU max error " + std::to_string(worst));

    std::uniform_real_distribution<double> score(0.01, 1.0);
    std::uniform_int_distribution<int> cls(0, 2), count(0, 10);
    int mismatches = 0;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<Detection> dets;
        const int n = count(rng);
        for (int i = 0; i < n; ++i) {
            auto b = random_box(rng);
            b.cx = 0.4 + 0.2 * b.cx;
            b.cy = 0.4 + 0.2 * b.cy;
            b.w = 0.2 + 0.2 * b.w;
            b.h = 0.2 + 0.2 * b.h;
            dets.push_back({cls(rng), score(rng), b});
        }
        mismatches += non_max_suppression(dets, 0.45) != oracle::brute_force_nms(dets, 0.45);
    }
    c.expect(mismatches == 0, std::to_string(mismatches) + " NMS mismatches");
    const double secs = Seconds(std::chrono::steady_clock::now() - start).count();
    c.expect(secs < 10.0, "took " + std::to_string(secs) + " s");
}

void decode(Check& c) {
    HeadScale s;
    s.grid_w = s.grid_h = 8;
    s.anchors = {{0.2, 0.1}};
    s.logits.assign(s.expected_size(), 0.0f);
    const auto dets = decode_head({s}, 0.0);
    c.expect(dets.size() == 64, "expected 64 zero-logit detections");
    if (dets.size() == 64) {
        const auto& d = dets[4 * 8 + 3];
        c.expect(d.box.cx == (3 + 0.5) / 8 && d.box.cy == (4 + 0.5) / 8, "zero-logit center");
        c.expect(std::abs(d.box.w - 0.2) < 1e-15 && std::abs(d.box.h - 0.1) < 1e-15, "zero-logit size");
        c.expect(d.score == 0.25, "zero-logit score");
    }

    std::mt19937_64 rng(77);
    std::normal_distribution<float> logit(0.0f, 3.0f);
    std::uniform_real_distribution<float> bump(0.0f, 4.0f);
    for (int trial = 0; trial < 1000; ++trial) {
        HeadScale p;
        p.grid_w = p.grid_h = 2;
        p.anchors = {{0.3, 0.3}, {0.5, 0.2}};
        p.logits.resize(p.expected_size());
        for (auto& v : p.logits) v = logit(rng);
        const auto before = decode_head({p}, 0.0);
        const std::size_t cell = rng() % (4 * p.anchors.size());
        p.logits[cell * p.stride() + 4] += bump(rng);
        const auto after = decode_head({p}, 0.0);
        bool ok = before.size() == after.size();
        for (std::size_t i = 0; ok && i < before.size(); ++i) ok = after[i].score >= before[i].score;
        c.expect(ok, "objectness bump lowered a score in trial " + std::to_string(trial));
    }
}

void evaluation(Check& c) {
    eval::EvalSample stair;
    for (int i = 0; i < 3; ++i) stair.ground_truth.push_back({1, cell_box(i)});
    stair.predictions = {{1, 0.9, cell_box(0)}, {1, 0.8, cell_box(7)}, {1, 0.7, cell_box(1)}, {1, 0.6, cell_box(2)}};
    const double ap = eval::mean_average_precision(std::vector<eval::EvalSample>{stair}).mean_ap;
    c.expect(std::abs(ap - 0.8056) <= 1e-4, "staircase AP " + std::to_string(ap));
    c.expect(std::abs(ap - oracle::step_sum_ap({true, false, true, true}, 3)) < 1e-12, "staircase vs oracle");

    std::vector<eval::EvalSample> perfect(4);
    for (int s = 0; s < 4; ++s) {
        for (int i = 0; i < 5; ++i) {
            perfect[s].ground_truth.push_back({(2 * s + i) % 10, cell_box(i)});
            perfect[s].predictions.push_back({(2 * s + i) % 10, 0.5 + 0.1 * i, cell_box(i)});
        }
    }
    c.expect(eval::mean_average_precision(perfect).mean_ap == 1.0, "perfect predictor mAP != 1");

    std::mt19937_64 rng(31);
    auto shuffled = stair;
    shuffled.predictions.push_back({1, 0.55, cell_box(2)});
    shuffled.predictions.push_back({1, 0.3, cell_box(5)});
    shuffled.ground_truth.push_back({4, cell_box(4)});
    shuffled.predictions.push_back({4, 0.42, cell_box(4)});
    const double base = eval::mean_average_precision(std::vector<eval::EvalSample>{shuffled}).mean_ap;
    int changed = 0;
    for (int i = 0; i < 100; ++i) {
        std::shuffle(shuffled.predictions.begin(), shuffled.predictions.end(), rng);
        std::shuffle(shuffled.ground_truth.begin(), shuffled.ground_truth.end(), rng);
        changed += eval::mean_average_precision(std::vector<eval::EvalSample>{shuffled}).mean_ap != base;
    }
    c.expect(changed == 0, std::to_string(changed) + " shuffles changed mAP");

    eval::EvalReport report;
    report.per_class_ap = {{3, 0.761}};
    report.gt_counts = {{3, 7000}};
    report.mean_ap = 0.761;
    const auto text = eval::format_report(report, "YOLO v5");
    bool row = false;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        row = row || (line.rfind("YOLO v5", 0) == 0 && line.find("0.761") != std::string::npos);
    }
    c.expect(row, "report row lacks 0.761");
}

void augmentation(Check& c, const fs::path& scratch) {
    std::mt19937_64 gen(53);
    aug::AugmentationConfig cfg;

    const auto img = random_annotated(gen, 41, 29, 4);
    const auto same = aug::affine_with(img, {}, cfg);
    c.expect(same.image == img.image, "identity affine changed pixels");
    c.expect(same.boxes.size() == img.boxes.size(), "identity affine changed box count");
    for (std::size_t i = 0; i < std::min(same.boxes.size(), img.boxes.size()); ++i) {
        const auto& a = same.boxes[i].box;
        const auto& b = img.boxes[i].box;
        c.expect(same.boxes[i].class_id == img.boxes[i].class_id && std::abs(a.cx - b.cx) < 1e-12 &&
                     std::abs(a.cy - b.cy) < 1e-12 && std::abs(a.w - b.w) < 1e-12 && std::abs(a.h - b.h) < 1e-12,
                 "identity affine moved a box");
    }

    long bad_pixels = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_annotated(gen, 23, 19, 2);
        const auto b = random_annotated(gen, 23, 19, 1);
        const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
        const auto out = aug::mixup_with(a, b, lambda);
        for (std::size_t i = 0; i < out.image.pixels.size(); ++i) {
            bad_pixels += out.image.pixels[i] !=
                          static_cast<int>(std::round(lambda * a.image.pixels[i] + (1.0 - lambda) * b.image.pixels[i]));
        }
        c.expect(out.boxes.size() == 3, "mixup box union");
    }
    c.expect(bad_pixels == 0, std::to_string(bad_pixels) + " mixup pixels off the law");

    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto pca = aug::color_pca(random_annotated(gen, 16, 12, 0).image);
        for (int i = 0; i < 3; ++i) {
            for (int r = 0; r < 3; ++r) {
                double ae = 0.0;
                for (int k = 0; k < 3; ++k) ae += pca.covariance[r][k] * pca.eigenvectors[i][k];
                worst = std::max(worst, std::abs(ae - pca.eigenvalues[i] * pca.eigenvectors[i][r]));
            }
        }
    }
    c.expect(worst < 1e-6, "PCA residual " + std::to_string(worst));

    std::vector<AnnotatedImage> inputs;
    for (int i = 0; i < 4; ++i) inputs.push_back(random_annotated(gen, 48 + 8 * i, 32 + 4 * i, 2));
    const auto partner = random_annotated(gen, 48, 32, 1);
    cfg.mosaic_width = 96;
    cfg.mosaic_height = 80;
    const auto write_run = [&](const fs::path& dir) {
        fs::create_directories(dir);
        Rng rng(4242);
        const std::vector<std::pair<std::string, AnnotatedImage>> outs{
            {"mosaic", aug::mosaic(inputs, cfg, rng)},
            {"mixup", aug::mixup(inputs[0], partner, cfg, rng)},
            {"affine", aug::affine_augment(inputs[1], cfg, rng)},
            {"pca", aug::pca_color_augment(inputs[2], cfg, rng)}};
        for (const auto& [name, out] : outs) {
            write_png(dir / (name + ".png"), out.image);
            data::write_annotations(dir / (name + ".txt"), out.boxes);
        }
    };
    write_run(scratch / "run1");
    write_run(scratch / "run2");
    for (const char* name : {"mosaic", "mixup", "affine", "pca"}) {
        for (const char* ext : {".png", ".txt"}) {
            const std::string file = std::string(name) + ext;
            c.expect(testing::read_file(scratch / "run1" / file) == testing::read_file(scratch / "run2" / file),
                     file + " differs between runs");
        }
    }
}

void knowledge_base(Check& c) {
    const auto seed_path = testing::kData / "kb" / "seed_kb.json";
    const auto text = testing::read_file(seed_path);
    const auto kb = kb::parse_kb(text);
    c.expect(kb::serialize_kb(kb) == text, "seed KB does not round-trip");

    const auto pm = kb::lookup(kb, "pmildew", kb::Lang::ne);
    bool soda = false;
    for (const auto& p : pm.remedy) soda = soda || p.find("खाने सोडा (Baking soda)") != std::string::npos;
    c.expect(soda, "pmildew remedy lacks the baking soda text");

    std::mt19937_64 rng(99);
    const auto edit = [&rng](kb::KnowledgeBase& k) {
        auto it = k.entries.begin();
        std::advance(it, static_cast<long>(rng() % k.entries.size()));
        ++k.version;
        it->second.last_modified_version = k.version;
        it->second.prevention.push_back("परिमार्जन " + std::to_string(k.version));
        if (rng() % 3 == 0) it->second.remedy_en = std::vector<std::string>{"edit " + std::to_string(k.version)};
    };
    int diverged = 0;
    for (int history = 0; history < 100; ++history) {
        auto server = kb;
        std::vector<kb::KnowledgeBase> snapshots{server};
        const int edits = 1 + static_cast<int>(rng() % 15);
        for (int i = 0; i < edits; ++i) {
            edit(server);
            snapshots.push_back(server);
        }
        auto client = snapshots[rng() % snapshots.size()];
        const auto wire = json::parse(kb::to_json(kb::kb_delta(server, client.version)).dump());
        client = kb::apply_delta(client, kb::delta_from_json(wire));
        diverged += !(client == server);
    }
    c.expect(diverged == 0, std::to_string(diverged) + " histories diverged");
}

void end_to_end(Check& c, const fs::path& scratch) {
    const auto start = std::chrono::steady_clock::now();
    const auto fixture = infer::load_fixture(testing::kData / "stub" / "fixture.json");
    const infer::FixtureEntry* entry_a = nullptr;
    for (const auto& e : fixture.entries) {
        if (e.image == "image_a.png") entry_a = &e;
    }
    c.expect(entry_a != nullptr, "fixture has no image_a.png");
    if (!entry_a) return;
    const auto image_a = testing::read_file(testing::kData / "stub" / entry_a->image);
    const auto image_b = testing::read_file(testing::kData / "stub" / "image_b.png");

    {
        testing::LiveServer server(testing::stub_config(scratch));
        auto client = server.client();
        const auto res = testing::post_image(client, image_a);
        c.expect(res && res->status == 200, "detect on image A failed");
        if (res && res->status == 200) {
            const auto body = json::parse(res->body);
            const auto& dets = body["detections"];
            c.expect(dets.size() == entry_a->expected_original.size(), "detection count");
            for (std::size_t i = 0; i < std::min<std::size_t>(dets.size(), entry_a->expected_original.size()); ++i) {
                const auto& want = entry_a->expected_original[i];
                const auto got = infer::detection_from_json(dets[i]);
                c.expect(got.class_id == want.class_id && got.label().slug == "gmold", "class");
                c.expect(std::abs(got.score - want.score) < 1e-9, "score");
                c.expect(std::abs(got.box.cx - want.box.cx) < 1e-9 && std::abs(got.box.cy - want.box.cy) < 1e-9 &&
                             std::abs(got.box.w - want.box.w) < 1e-9 && std::abs(got.box.h - want.box.h) < 1e-9,
                         "box");
            }
            const auto gmold = kb::lookup(*server.service().snapshot()->kb, "gmold", kb::Lang::ne);
            bool remedy = false;
            for (const auto& r : body["remedies"]) {
                remedy = remedy || (r["slug"] == "gmold" &&
                                    r["sections"]["remedy"].get<std::vector<std::string>>() == gmold.remedy);
            }
            c.expect(remedy, "response lacks the gmold remedy");
        }

        const std::vector<const std::string*> images{&image_a, &image_b};
        std::vector<json> sequential;
        for (const auto* img : images) {
            auto cl = server.client();
            const auto r = testing::post_image(cl, *img);
            sequential.push_back(r && r->status == 200 ? testing::without_request_id(json::parse(r->body)) : json());
        }
        std::vector<std::future<json>> futures;
        for (int i = 0; i < 32; ++i) {
            futures.push_back(std::async(std::launch::async, [&, i] {
                auto cl = server.client();
                const auto r = testing::post_image(cl, *images[static_cast<std::size_t>(i) % 2]);
                return r && r->status == 200 ? testing::without_request_id(json::parse(r->body)) : json();
            }));
        }
        int mismatched = 0;
        for (int i = 0; i < 32; ++i) mismatched += futures[static_cast<std::size_t>(i)].get() != sequential[static_cast<std::size_t>(i) % 2];
        c.expect(mismatched == 0, std::to_string(mismatched) + " concurrent responses differ");
    }

    for (int trial = 0; trial < 3; ++trial) {
        const auto log = scratch / ("crash" + std::to_string(trial) + ".log");
        const auto out = testing::crash_append_and_kill(log, 20 + 15 * trial);
        std::set<std::uint64_t> recovered;
        for (const auto& r : out.recovered) recovered.insert(r.id);
        long lost = 0;
        for (auto id : out.acked) lost += !recovered.count(id);
        c.expect(!out.acked.empty() && lost == 0, "crash trial lost " + std::to_string(lost) + " records");
    }
    const double secs = Seconds(std::chrono::steady_clock::now() - start).count();
    c.expect(secs < 30.0, "took " + std::to_string(secs) + " s");
}

void dataset_stats(Check& c, const fs::path& scratch) {
    testing::write_synthetic_dataset(scratch / "skewed", testing::kSkewedClassCounts, 600, 17);
    const auto s = data::compute_stats(scratch / "skewed");
    const auto max = *std::max_element(s.object_counts.begin(), s.object_counts.end());
    long min_nonzero = max;
    for (auto n : s.object_counts) {
        if (n > 0) min_nonzero = std::min(min_nonzero, n);
    }
    c.expect(s.object_counts == testing::kSkewedClassCounts, "per-class counts");
    c.expect(std::abs(s.imbalance_ratio - static_cast<double>(max) / static_cast<double>(min_nonzero)) < 1e-12,
             "ratio vs max/min");
    c.expect(s.imbalance_ratio > 70.0, "imbalance ratio " + std::to_string(s.imbalance_ratio));
    c.expect(s.image_count == 600, "image count");
}

}  // namespace

int main() {
    testing::TempDir scratch("tomato-acceptance");
    const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
        {"geometry: IoU vs raster oracle (1000 pairs) and NMS vs brute force (500 sets)", geometry},
        {"decode: zero-logit cell exact, objectness monotone over 1000 perturbations", decode},
        {"evaluation: staircase AP 0.8056, perfect mAP 1, shuffle invariance, 0.761 report row", evaluation},
        {"augmentation: identity affine, mixup law, PCA eigenpairs, bit-identical reruns",
         [&](Check& c) { augmentation(c, scratch / "aug"); }},
        {"kb: seed round trip, pmildew baking soda text, 100 delta-sync histories", knowledge_base},
        {"service: fixture A over HTTP, 32 concurrent requests, crash-safe feedback log",
         [&](Check& c) { end_to_end(c, scratch / "e2e"); }},
        {"dataset: class-distribution stats with imbalance ratio above 70",
         [&](Check& c) { dataset_stats(c, scratch / "ds"); }},
    };
    fs::create_directories(scratch / "e2e");
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Check c;
        const auto start = std::chrono::steady_clock::now();
        try {
            run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("threw: ") + e.what());
        }
        const double secs = Seconds(std::chrono::steady_clock::now() - start).count();
        failed += !c.ok();
        char timing[32];
        std::snprintf(timing, sizeof timing, "%.2fs", secs);
        std::cout << (c.ok() ? "PASS " : "FAIL ") << name << " [" << c.summary() << ", " << timing << "]" << std::endl;
    }
    std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - static_cast<std::size_t>(failed) << "/"
              << criteria.size() << std::endl;
    return failed ? 1 : 0;
}
