// tomato: operator command line over the detection, evaluation, augmentation,
// dataset, knowledge-base and server modules.
//
// Exit codes: 0 success, 1 domain failure, 2 usage error.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <pthread.h>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "CLI11.hpp"
#include "tomato/augment.hpp"
#include "tomato/dataset.hpp"
#include "tomato/error.hpp"
#include "tomato/evaluation.hpp"
#include "tomato/inference.hpp"
#include "tomato/knowledge_base.hpp"
#include "tomato/server.hpp"

using namespace tomato;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

const fs::path kDefaultData = TOMATO_DATA_DIR;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Box colors by class id, RGB.
constexpr std::array<std::array<std::uint8_t, 3>, kNumClasses> kPalette{{
    {{160, 160, 160}}, {{128, 128, 255}}, {{165, 42, 42}},  {{255, 215, 0}},  {{220, 20, 60}},
    {{255, 140, 0}},   {{240, 240, 240}}, {{0, 191, 255}},  {{148, 0, 211}},  {{50, 205, 50}},
}};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Image render_overlay(const Image& src, const std::vector<Detection>& dets) {
    cv::Mat canvas(src.height, src.width, CV_8UC3);
    std::memcpy(canvas.data, src.pixels.data(), src.pixels.size());
    for (const auto& d : dets) {
        const auto& c = kPalette[static_cast<std::size_t>(d.class_id)];
        const cv::Scalar color(c[0], c[1], c[2]);
        const cv::Point p1(static_cast<int>(std::lround(d.box.x1() * src.width)),
                           static_cast<int>(std::lround(d.box.y1() * src.height)));
        const cv::Point p2(static_cast<int>(std::lround(d.box.x2() * src.width)),
                           static_cast<int>(std::lround(d.box.y2() * src.height)));
        cv::rectangle(canvas, p1, p2, color, 2);
        const std::string text = std::string(d.label().slug) + " " + fmt("%.2f", d.score);
        int baseline = 0;
        const auto size = cv::getTextSize(text, cv::FONT_HERSHEY_SIMPLEX, 0.5, 1, &baseline);
        const int top = std::max(0, p1.y - size.height - baseline - 2);
        cv::rectangle(canvas, cv::Point(p1.x, top), cv::Point(p1.x + size.width + 4, top + size.height + baseline + 2),
                      color, cv::FILLED);
        cv::putText(canvas, text, cv::Point(p1.x + 2, top + size.height), cv::FONT_HERSHEY_SIMPLEX, 0.5,
                    cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    }
    Image out(src.width, src.height);
    std::memcpy(out.pixels.data(), canvas.data, out.pixels.size());
    return out;
}

json box_json(const BoundingBox& b) { return {{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}}; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(Errc::storage, "cannot write '" + path.string() + "'");
}

// ---- detect ------------------------------------------------------------

struct DetectArgs {
    std::string image;
    std::string backend = "stub";
    std::string model;
    double conf = kDefaultConfThreshold;
    double iou = kDefaultNmsIouThreshold;
    std::string format = "text";
    std::string overlay;
};

int run_detect(const DetectArgs& a) {
    infer::BackendKind kind;
    kind.type = a.backend == "stub" ? infer::BackendType::stub : infer::BackendType::external;
    if (!a.model.empty()) {
        kind.path = a.model;
    } else if (kind.type == infer::BackendType::stub) {
        kind.path = kDefaultData / "stub" / "fixture.json";
    } else {
        throw UsageError("--backend external needs --model <descriptor.json>");
    }
    const auto backend = infer::load_backend(kind);
    const Image image = read_image(a.image);
    const auto result = infer::run_pipeline(*backend, image, a.conf, a.iou);
    if (!a.overlay.empty()) write_png(a.overlay, render_overlay(image, result.detections));

    if (a.format == "json") {
        json dets = json::array();
        for (const auto& d : result.detections) {
            dets.push_back({{"slug", std::string(d.label().slug)},
                            {"class_id", d.class_id},
                            {"score", d.score},
                            {"box", box_json(d.box)}});
        }
        std::cout << json{{"image", a.image},
                          {"width", image.width},
                          {"height", image.height},
                          {"model_version", backend->descriptor().model_version},
                          {"detections", dets}}
                         .dump(2)
                  << "\n";
        return 0;
    }
    if (result.detections.empty()) {
        std::cout << "no detections\n";
        return 0;
    }
    for (const auto& d : result.detections) {
        std::cout << d.label().slug << " " << fmt("%.2f", d.score) << " " << fmt("%.6f", d.box.cx) << " "
                  << fmt("%.6f", d.box.cy) << " " << fmt("%.6f", d.box.w) << " " << fmt("%.6f", d.box.h) << "\n";
    }
    return 0;
}

// ---- evaluate ----------------------------------------------------------

struct EvaluateArgs {
    std::string gt;
    std::string pred;
    double iou = eval::kDefaultMatchIou;
    std::string interpolation = "step";
    std::string format = "text";
    std::string method = "Ours";
    std::string pr_dump;
};

std::map<std::string, fs::path> txt_files(const fs::path& dir) {
    std::map<std::string, fs::path> out;
    if (!fs::is_directory(dir)) throw Error(Errc::not_found, "'" + dir.string() + "' is not a directory");
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".txt") out[e.path().stem().string()] = e.path();
    }
    return out;
}

int run_evaluate(const EvaluateArgs& a) {
    const auto mode = eval::parse_interpolation(a.interpolation);
    if (!mode) throw UsageError("--interpolation must be 'step' or 'all-point'");
    const auto gt = txt_files(a.gt);
    const auto pred = txt_files(a.pred);
    std::vector<eval::EvalSample> samples;
    for (const auto& [stem, path] : gt) {
        eval::EvalSample s;
        s.ground_truth = data::parse_annotations(path);
        if (auto it = pred.find(stem); it != pred.end()) s.predictions = data::parse_predictions(it->second);
        samples.push_back(std::move(s));
    }
    for (const auto& [stem, path] : pred) {
        if (gt.count(stem)) continue;
        samples.push_back({{}, data::parse_predictions(path)});
    }
    const auto report = eval::mean_average_precision(samples, a.iou, *mode);
    if (!a.pr_dump.empty()) {
        json curves = json::object();
        for (const auto& [cls, points] : report.pr_curves) {
            json pts = json::array();
            for (const auto& p : points) pts.push_back({p.recall, p.precision});
            curves[std::string(label_for_id(cls).slug)] = pts;
        }
        write_text(a.pr_dump, curves.dump(2) + "\n");
    }
    if (a.format == "json") {
        std::cout << eval::report_to_json(report, a.method).dump(2) << "\n";
    } else {
        std::cout << eval::format_report(report, a.method);
    }
    return 0;
}

// ---- augment -----------------------------------------------------------

struct AugmentArgs {
    std::string op;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::string out;
    int width = 640;
    int height = 640;
    std::optional<double> scale, translate_x, translate_y, rotate, lambda;
    std::vector<double> alphas;
};

fs::path annotation_for(const fs::path& image) {
    auto sibling = image;
    sibling.replace_extension(".txt");
    if (fs::exists(sibling)) return sibling;
    // images/<name>.png pairs with labels/<name>.txt
    const auto labels = image.parent_path().parent_path() / "labels" / (image.stem().string() + ".txt");
    return fs::exists(labels) ? labels : fs::path();
}

AnnotatedImage load_annotated(const fs::path& image) {
    AnnotatedImage a;
    a.image = read_image(image);
    if (const auto ann = annotation_for(image); !ann.empty()) a.boxes = data::parse_annotations(ann);
    return a;
}

int run_augment(const AugmentArgs& a) {
    const std::map<std::string, std::size_t> arity{{"mosaic", 4}, {"mixup", 2}, {"affine", 1}, {"pca", 1}};
    const auto it = arity.find(a.op);
    if (it == arity.end()) throw UsageError("--op must be mosaic, mixup, affine or pca");
    if (a.inputs.size() != it->second) {
        throw UsageError(a.op + " takes exactly " + std::to_string(it->second) + " --in image(s), got " +
                         std::to_string(a.inputs.size()));
    }
    if (!a.alphas.empty() && a.alphas.size() != 3) throw UsageError("--alphas takes three values");

    std::vector<AnnotatedImage> in;
    for (const auto& p : a.inputs) in.push_back(load_annotated(p));
    aug::AugmentationConfig cfg;
    cfg.seed = a.seed;
    cfg.mosaic_width = a.width;
    cfg.mosaic_height = a.height;
    aug::validate(cfg);
    Rng rng(a.seed);

    AnnotatedImage out;
    if (a.op == "mosaic") {
        out = aug::mosaic(in, cfg, rng);
    } else if (a.op == "mixup") {
        // Normalized boxes are unchanged by a plain resize.
        if (in[1].image.width != in[0].image.width || in[1].image.height != in[0].image.height) {
            in[1].image = resize_bilinear(in[1].image, in[0].image.width, in[0].image.height);
        }
        out = aug::mixup_with(in[0], in[1], a.lambda.value_or(aug::sample_mixup_lambda(cfg, rng)));
    } else if (a.op == "affine") {
        auto p = aug::sample_affine(cfg, rng);
        if (a.scale) p.scale = *a.scale;
        if (a.translate_x) p.translate_x = *a.translate_x;
        if (a.translate_y) p.translate_y = *a.translate_y;
        if (a.rotate) p.rotate_deg = *a.rotate;
        out = aug::affine_with(in[0], p, cfg);
    } else {
        std::array<double, 3> alphas{};
        if (a.alphas.empty()) {
            alphas = aug::sample_pca_alphas(cfg, rng);
        } else {
            std::copy(a.alphas.begin(), a.alphas.end(), alphas.begin());
        }
        out = aug::pca_color_with(in[0], alphas);
    }
    fs::path image_out = a.out;
    if (image_out.extension() != ".png") image_out += ".png";
    auto ann_out = image_out;
    ann_out.replace_extension(".txt");
    write_png(image_out, out.image);
    data::write_annotations(ann_out, out.boxes);
    std::cout << image_out.string() << "\n" << ann_out.string() << "\n";
    return 0;
}

// ---- stats / split ------------------------------------------------------

int run_stats(const std::string& root, const std::string& format) {
    if (!fs::is_directory(root)) throw Error(Errc::not_found, "'" + root + "' is not a directory");
    const auto s = data::compute_stats(root);
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
    if (format == "json") {
        json counts = json::object();
        for (const auto& l : class_labels()) counts[std::string(l.slug)] = s.object_counts[static_cast<std::size_t>(l.id)];
        std::cout << json{{"images", s.image_count},
                          {"objects", s.object_count},
                          {"object_counts", counts},
                          {"imbalance_ratio", s.imbalance_ratio},
                          {"warnings", s.warnings}}
                         .dump(2)
                  << "\n";
        return 0;
    }
    std::cout << "images  " << s.image_count << "\nobjects " << s.object_count << "\n\n";
    for (const auto& l : class_labels()) {
        char line[96];
        std::snprintf(line, sizeof line, "%2d %-9s %8ld\n", l.id, std::string(l.slug).c_str(),
                      s.object_counts[static_cast<std::size_t>(l.id)]);
        std::cout << line;
    }
    std::cout << "\nimbalance ratio " << fmt("%.1f", s.imbalance_ratio) << "\n";
    return 0;
}

int run_split(const std::string& root, const data::SplitRatios& r, std::uint64_t seed, const std::string& out) {
    if (!fs::is_directory(root)) throw Error(Errc::not_found, "'" + root + "' is not a directory");
    const auto m = data::split_dataset(root, r, seed);
    data::write_manifests(out, m);
    std::cout << "train " << m.train.size() << "\nval   " << m.val.size() << "\ntest  " << m.test.size() << "\n";
    return 0;
}

// ---- kb -----------------------------------------------------------------

int run_kb_validate(const std::string& path, bool strict) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::not_found, "cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const auto violations = kb::validate_kb(ss.str(), strict ? kb::ValidationMode::strict : kb::ValidationMode::draft);
    if (violations.empty()) {
        std::cout << "OK\n";
        return 0;
    }
    for (const auto& v : violations) std::cout << v.code << " " << v.path << ": " << v.message << "\n";
    return kExitDomain;
}

int run_kb_show(const std::string& path, const std::string& slug, const std::string& lang_code,
                const std::string& format) {
    const auto lang = kb::parse_lang(lang_code);
    if (!lang) throw UsageError("--lang must be 'ne' or 'en'");
    const auto doc = kb::lookup(kb::load_kb(path), slug, *lang);
    const auto j = kb::to_json(doc);
    if (format == "json") {
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    std::cout << doc.name << " (" << doc.slug << ")\n";
    if (doc.fallback) std::cout << "[ne fallback]\n";
    for (const char* section : {"symptoms", "prevention", "remedy"}) {
        std::cout << "\n" << j["headings"][section].get<std::string>() << "\n";
        for (const auto& p : j["sections"][section]) std::cout << "  - " << p.get<std::string>() << "\n";
    }
    return 0;
}

// ---- serve --------------------------------------------------------------

int run_serve(const std::string& config_path) {
    const auto cfg = server::load_config(config_path);
    // Handle signals on a dedicated thread so stop() runs outside a handler.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    sigaddset(&set, SIGHUP);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    server::AdvisoryService service(cfg);
    server::HttpServer http(service);
    const int port = http.bind();
    std::cout << "listening on http://" << cfg.host << ":" << port << "/api/v1" << std::endl;
    std::thread signals([&] {
        for (;;) {
            int sig = 0;
            if (sigwait(&set, &sig) != 0) continue;
            if (sig == SIGHUP) {
                try {
                    service.reload();
                    std::cerr << "reloaded, kb version " << service.snapshot()->kb->version << std::endl;
                } catch (const std::exception& e) {
                    std::cerr << "reload failed: " << e.what() << std::endl;
                }
                continue;
            }
            http.stop();
            return;
        }
    });
    http.listen();
    signals.join();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tomato disease detection and advisory toolkit"};
    app.require_subcommand(1);

    DetectArgs detect;
    auto* d = app.add_subcommand("detect", "Detect diseases in one image");
    d->add_option("--image", detect.image, "Image file")->required();
    d->add_option("--backend", detect.backend, "stub or external")->check(CLI::IsMember({"stub", "external"}));
    d->add_option("--model", detect.model, "Stub fixture or external model descriptor");
    d->add_option("--conf", detect.conf, "Score threshold")->check(CLI::Range(0.0, 0.999999));
    d->add_option("--iou", detect.iou, "NMS IoU threshold")->check(CLI::Range(0.000001, 0.999999));
    d->add_option("--format", detect.format, "text or json")->check(CLI::IsMember({"text", "json"}));
    d->add_option("--overlay", detect.overlay, "Write an annotated PNG here");

    EvaluateArgs evaluate;
    auto* e = app.add_subcommand("evaluate", "Mean AP of prediction files against ground truth");
    e->add_option("--gt", evaluate.gt, "Directory of annotation .txt files")->required();
    e->add_option("--pred", evaluate.pred, "Directory of prediction .txt files")->required();
    e->add_option("--iou", evaluate.iou, "Match IoU threshold")->check(CLI::Range(0.000001, 1.0));
    e->add_option("--interpolation", evaluate.interpolation, "step or all-point");
    e->add_option("--format", evaluate.format, "text or json")->check(CLI::IsMember({"text", "json"}));
    e->add_option("--method", evaluate.method, "Method name in the report");
    e->add_option("--pr-dump", evaluate.pr_dump, "Write per-class precision/recall points as JSON");

    AugmentArgs augment;
    auto* a = app.add_subcommand("augment", "Apply one augmentation");
    a->add_option("--op", augment.op, "mosaic, mixup, affine or pca")->required();
    a->add_option("--seed", augment.seed, "RNG seed");
    a->add_option("--in", augment.inputs, "Input image (annotation: same stem .txt)")->required();
    a->add_option("--out", augment.out, "Output path; writes <out>.png and <out>.txt")->required();
    a->add_option("--width", augment.width, "Mosaic width");
    a->add_option("--height", augment.height, "Mosaic height");
    a->add_option("--scale", augment.scale, "Affine scale");
    a->add_option("--translate-x", augment.translate_x, "Affine translation, fraction of width");
    a->add_option("--translate-y", augment.translate_y, "Affine translation, fraction of height");
    a->add_option("--rotate", augment.rotate, "Affine rotation in degrees");
    a->add_option("--lambda", augment.lambda, "Mixup weight of the first image")->check(CLI::Range(0.0, 1.0));
    a->add_option("--alphas", augment.alphas, "Three PCA perturbation weights");

    std::string dataset_root, stats_format = "text";
    auto* s = app.add_subcommand("stats", "Class distribution of a dataset");
    s->add_option("--dataset", dataset_root, "Root with images/ and labels/")->required();
    s->add_option("--format", stats_format, "text or json")->check(CLI::IsMember({"text", "json"}));

    std::string split_root, split_out;
    std::uint64_t split_seed = 0;
    data::SplitRatios ratios;
    auto* sp = app.add_subcommand("split", "Seeded train/val/test manifests");
    sp->add_option("--dataset", split_root, "Root with images/ and labels/")->required();
    sp->add_option("--out", split_out, "Directory for train.txt, val.txt, test.txt")->required();
    sp->add_option("--seed", split_seed, "Shuffle seed");
    sp->add_option("--train", ratios.train, "Train fraction")->check(CLI::Range(0.0, 1.0));
    sp->add_option("--val", ratios.val, "Validation fraction")->check(CLI::Range(0.0, 1.0));
    sp->add_option("--test", ratios.test, "Test fraction")->check(CLI::Range(0.0, 1.0));

    std::string kb_path = (kDefaultData / "kb" / "seed_kb.json").string();
    bool kb_strict = false;
    std::string kb_slug, kb_lang = "ne", kb_format = "text";
    auto* k = app.add_subcommand("kb", "Knowledge base tools");
    k->require_subcommand(1);
    auto* kv = k->add_subcommand("validate", "Check a KB file");
    kv->add_option("--kb", kb_path, "KB file");
    kv->add_flag("--strict", kb_strict, "Reject draft entries");
    auto* ks = k->add_subcommand("show", "Print one disease entry");
    ks->add_option("slug", kb_slug, "Disease slug")->required();
    ks->add_option("--kb", kb_path, "KB file");
    ks->add_option("--lang", kb_lang, "ne or en");
    ks->add_option("--format", kb_format, "text or json")->check(CLI::IsMember({"text", "json"}));

    std::string config_path;
    auto* sv = app.add_subcommand("serve", "Run the advisory HTTP server");
    sv->add_option("--config", config_path, "Server config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kExitUsage;
    }

    try {
        if (*d) return run_detect(detect);
        if (*e) return run_evaluate(evaluate);
        if (*a) return run_augment(augment);
        if (*s) return run_stats(dataset_root, stats_format);
        if (*sp) {
            if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
                throw UsageError("--train, --val and --test must sum to 1");
            }
            return run_split(split_root, ratios, split_seed, split_out);
        }
        if (*kv) return run_kb_validate(kb_path, kb_strict);
        if (*ks) return run_kb_show(kb_path, kb_slug, kb_lang, kb_format);
        if (*sv) return run_serve(config_path);
    } catch (const UsageError& ex) {
        std::cerr << "usage error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const Error& ex) {
        std::cerr << "error: " << ex.code_name() << ": " << ex.what() << "\n";
        return kExitDomain;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitDomain;
    }
    return kExitUsage;
}
