// defocus_restore: defocus-level classification and depth-variant
// deconvolution of 16-bit fluorescence microscopy images.
//
// Subcommands: psf, synth, train, predict, deconvolve, evaluate, plot.
// Exit codes: 0 success, 2 argument errors, 3 data/format errors,
// 4 numeric divergence.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include "defocus/csv.hpp"
#include "defocus/dataset.hpp"
#include "defocus/delpnet.hpp"
#include "defocus/errors.hpp"
#include "defocus/forward_model.hpp"
#include "defocus/metrics.hpp"
#include "defocus/pgm.hpp"
#include "defocus/pipeline_config.hpp"
#include "defocus/restore.hpp"

namespace fs = std::filesystem;
using namespace defocus;

namespace {

// Argument-level problems detected after CLI11 parsing (bad ranges, missing
// inputs the user named); mapped to exit code 2.
struct ArgumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOpts {
    std::string config_path;
    PipelineConfig resolved(const std::vector<std::pair<std::string, std::string>>& overrides =
                                {}) const {
        PipelineConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        return cfg;
    }
};

std::vector<PsfKernel> build_all_kernels(const OpticalConfig& optics) {
    std::vector<PsfKernel> kernels;
    kernels.reserve(optics.num_levels);
    for (int level = 0; level < optics.num_levels; ++level)
        kernels.push_back(build_psf_kernel(DefocusLevel::at(level, optics), optics));
    return kernels;
}

// Sources for synth: loose PGMs are in-focus images; subdirectories holding
// PGMs are treated as focal stacks and reduced with select_in_focus.
std::vector<std::pair<std::string, Image16>> collect_sources(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ArgumentError(dir.string() + " is not a directory");
    std::vector<std::pair<std::string, Image16>> sources;
    std::vector<fs::path> files, stacks;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            files.push_back(entry.path());
        else if (entry.is_directory())
            stacks.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::sort(stacks.begin(), stacks.end());
    for (const auto& f : files) sources.emplace_back(f.stem().string(), read_pgm(f));
    for (const auto& s : stacks) {
        std::vector<fs::path> frames;
        for (const auto& entry : fs::directory_iterator(s))
            if (entry.is_regular_file() && entry.path().extension() == ".pgm")
                frames.push_back(entry.path());
        if (frames.empty()) continue;
        std::sort(frames.begin(), frames.end());
        std::vector<Image16> stack;
        stack.reserve(frames.size());
        for (const auto& f : frames) stack.push_back(read_pgm(f));
        sources.emplace_back(s.filename().string(), stack[select_in_focus(stack)]);
    }
    if (sources.empty()) throw ArgumentError("no PGM sources found under " + dir.string());
    return sources;
}

PatchPredictor delpnet_predictor(DelpNetModel& model) {
    return [&model](const RealImage& raw) {
        Image16 patch(raw.width, raw.height);
        for (size_t i = 0; i < raw.data.size(); ++i)
            patch.data[i] =
                static_cast<uint16_t>(std::clamp(std::round(raw.data[i]), 0.0, 65535.0));
        return predict(model, normalize_patch(patch)).label;
    };
}

// ---------------------------------------------------------------------------

int cmd_psf(const CommonOpts& common, int level, const std::string& out_dir) {
    PipelineConfig cfg = common.resolved();
    cfg.optics.validate();
    if (level < 0 || level >= cfg.optics.num_levels)
        throw ArgumentError("level " + std::to_string(level) + " outside [0, " +
                            std::to_string(cfg.optics.num_levels - 1) + "]");
    fs::create_directories(out_dir);
    const PsfKernel kernel = build_psf_kernel(DefocusLevel::at(level, cfg.optics), cfg.optics);
    const std::string stem = "kernel_level" + std::to_string(level);
    export_kernel_pgm(kernel, fs::path(out_dir) / (stem + ".pgm"),
                      fs::path(out_dir) / (stem + ".txt"));
    cfg.write_resolved(fs::path(out_dir) / "resolved_config.txt");
    std::cout << stem << ".pgm " << kernel.size << "x" << kernel.size << "\n";
    return 0;
}

int cmd_synth(const CommonOpts& common, const std::string& input, const std::string& output,
              uint64_t seed, double gain, const std::vector<int>& levels, int crops,
              bool no_bg_relabel) {
    PipelineConfig cfg = common.resolved();
    cfg.seed = seed;
    if (gain > 0) cfg.synth_gain = gain;
    if (crops > 0) cfg.crops_per_level = crops;
    cfg.optics.validate();

    DatasetBuildConfig build;
    build.levels = levels;
    build.crops_per_level = cfg.crops_per_level;
    build.gain = cfg.synth_gain;
    build.seed = cfg.seed;
    build.bg_max_threshold = cfg.bg_max_threshold;
    build.bg_range_threshold = cfg.bg_range_threshold;
    build.relabel_bg = !no_bg_relabel;

    const auto sources = collect_sources(input);
    fs::create_directories(output);
    build_dataset(sources, cfg.optics, build, output);
    cfg.write_resolved(fs::path(output) / "resolved_config.txt");

    size_t total = 0;
    for (const char* split : {"train", "val", "test"})
        total += read_csv(fs::path(output) / split / "index.csv").size() - 1;
    std::cout << "synthesized " << total << " patches from " << sources.size() << " sources\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data, const std::string& out,
              int epochs, uint64_t seed, bool no_bg, double bn_momentum, double lr,
              double lr_decay, int batch) {
    PipelineConfig cfg = common.resolved();
    if (epochs >= 0) cfg.train.epochs = epochs;
    cfg.train.seed = seed;
    cfg.train.use_bg = !no_bg;
    if (bn_momentum >= 0) cfg.train.hyper.bn_momentum = bn_momentum;
    if (lr > 0) cfg.train.learning_rate = lr;
    if (lr_decay >= 0) cfg.train.lr_decay = lr_decay;
    if (batch > 0) cfg.train.batch_size = batch;
    cfg.train.validate();

    const auto train_patches = load_split(fs::path(data) / "train");
    const auto val_patches = load_split(fs::path(data) / "val");
    if (train_patches.empty()) throw ArgumentError("empty training split under " + data);

    TrainResult result = train_delpnet(train_patches, val_patches, cfg.train);
    const fs::path out_path(out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    save_model(result.model, out_path);
    write_training_log(result.log, out_path.string() + ".log.csv");
    cfg.write_resolved(out_path.string() + ".config.txt");
    if (!result.log.empty())
        std::cout << "final val accuracy " << result.log.back().val_accuracy << "\n";
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data, const std::string& out) {
    DelpNetModel model = load_model(model_path);
    const auto patches = load_split(data);
    const int classes = model.specs.back().out;

    std::vector<CsvRow> rows;
    CsvRow header = {"id", "label", "level", "pred"};
    for (int c = 0; c < classes; ++c) header.push_back("p" + std::to_string(c));
    rows.push_back(header);
    for (const auto& patch : patches) {
        const Prediction pred = predict(model, patch.pixels);
        CsvRow row = {patch.id, std::to_string(patch.label), std::to_string(patch.level),
                      std::to_string(pred.label)};
        for (double p : pred.probabilities) row.push_back(format_double(p));
        rows.push_back(std::move(row));
    }
    const fs::path out_path(out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_csv(out_path, rows);
    std::cout << "predicted " << patches.size() << " patches\n";
    return 0;
}

int cmd_deconvolve(const CommonOpts& common, const std::string& input,
                   const std::string& model_path, int stride, int iterations,
                   const std::string& output, bool depth_invariant) {
    PipelineConfig cfg = common.resolved();
    if (stride > 0) cfg.restore_stride = stride;
    if (iterations >= 0) cfg.restore.iterations = iterations;
    if (cfg.restore_stride < 1 || cfg.restore_stride > kPatchSize)
        throw ArgumentError("stride must be in [1, 84]");

    const Image16 image = read_pgm(input);
    DelpNetModel model = load_model(model_path);
    const auto kernels = build_all_kernels(cfg.optics);

    const auto predictor = delpnet_predictor(model);
    RestorationPlan plan = plan_restoration(image, cfg.restore_stride, predictor);

    RlOptions options = cfg.restore;
    options.force_level = depth_invariant ? 0 : -1;
    const Image16 restored = awdvd(image, plan, kernels, options);

    const fs::path out_path(output);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_pgm(restored, out_path);
    cfg.write_resolved(out_path.string() + ".config.txt");

    // Per-patch label map.
    std::vector<CsvRow> rows;
    rows.push_back({"offset_x", "offset_y", "label"});
    for (size_t i = 0; i < plan.grid.size(); ++i)
        rows.push_back({std::to_string(plan.grid[i].first), std::to_string(plan.grid[i].second),
                        std::to_string(plan.labels[i])});
    write_csv(out_path.string() + ".labels.csv", rows);
    std::cout << "deconvolved " << plan.grid.size() << " patches\n";
    return 0;
}

void evaluate_predictions(const fs::path& csv, const fs::path& outdir) {
    const auto rows = read_csv(csv);
    if (rows.size() < 2 || rows.front().size() < 5)
        throw FormatError(csv.string() + ": not a predictions table");
    const int classes = static_cast<int>(rows.front().size()) - 4;

    ConfusionMatrix matrix(classes);
    std::vector<std::vector<double>> probabilities;
    std::vector<int> labels;
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (static_cast<int>(row.size()) != 4 + classes)
            throw FormatError(csv.string() + ": ragged row " + std::to_string(i));
        const int truth = std::stoi(row[1]);
        const int pred = std::stoi(row[3]);
        if (truth < 0 || truth >= classes || pred < 0 || pred >= classes)
            throw FormatError(csv.string() + ": label outside class range in row " +
                              std::to_string(i));
        matrix.at(truth, pred) += 1;
        labels.push_back(truth);
        std::vector<double> p(classes);
        for (int c = 0; c < classes; ++c) p[c] = std::stod(row[4 + c]);
        probabilities.push_back(std::move(p));
    }

    const auto report = classification_report(matrix);
    write_csv(outdir / "report.csv",
              {{"accuracy", "precision", "recall", "f1"},
               {format_double(report.accuracy), format_double(report.precision),
                format_double(report.recall), format_double(report.f1)}});

    std::vector<CsvRow> cm_rows;
    for (int t = 0; t < classes; ++t) {
        CsvRow row;
        for (int p = 0; p < classes; ++p) row.push_back(std::to_string(matrix.at(t, p)));
        cm_rows.push_back(std::move(row));
    }
    write_csv(outdir / "confusion.csv", cm_rows);

    const auto curve = topk_curve(probabilities, labels, classes);
    std::vector<CsvRow> topk_rows{{"k", "accuracy"}};
    for (size_t k = 0; k < curve.size(); ++k)
        topk_rows.push_back({std::to_string(k + 1), format_double(curve[k])});
    write_csv(outdir / "topk.csv", topk_rows);
}

void evaluate_restoration(const fs::path& csv, const fs::path& outdir) {
    const auto rows = read_csv(csv);
    if (rows.size() < 2 || rows.front().size() < 5)
        throw FormatError(csv.string() + ": not a restoration table (level,reference,degraded,"
                                         "depth_variant,depth_invariant)");
    struct Stats {
        double psnr_degraded = 0, psnr_dv = 0, psnr_di = 0;
        double ssim_degraded = 0, ssim_dv = 0, ssim_di = 0, ratio = 0;
        int n = 0;
    };
    std::map<int, Stats> by_level;
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const int level = std::stoi(row[0]);
        const Image16 reference = read_pgm(row[1]);
        const Image16 degraded = read_pgm(row[2]);
        const Image16 dv = read_pgm(row[3]);
        const Image16 di = read_pgm(row[4]);
        Stats& s = by_level[level];
        s.psnr_degraded += psnr(reference, degraded);
        s.psnr_dv += psnr(reference, dv);
        s.psnr_di += psnr(reference, di);
        const double sd = ssim(reference, degraded);
        const double sv = ssim(reference, dv);
        s.ssim_degraded += sd;
        s.ssim_dv += sv;
        s.ssim_di += ssim(reference, di);
        s.ratio += ssim_ratio(sv, sd);
        s.n += 1;
    }

    std::vector<CsvRow> psnr_rows{{"level", "psnr_degraded", "psnr_depth_variant",
                                   "psnr_depth_invariant", "improvement_depth_variant",
                                   "improvement_depth_invariant"}};
    std::vector<CsvRow> ssim_rows{{"level", "ssim_degraded", "ssim_depth_variant",
                                   "ssim_depth_invariant", "ssim_ratio"}};
    for (const auto& [level, s] : by_level) {
        const double n = s.n;
        psnr_rows.push_back({std::to_string(level), format_double(s.psnr_degraded / n),
                             format_double(s.psnr_dv / n), format_double(s.psnr_di / n),
                             format_double((s.psnr_dv - s.psnr_degraded) / n),
                             format_double((s.psnr_di - s.psnr_degraded) / n)});
        ssim_rows.push_back({std::to_string(level), format_double(s.ssim_degraded / n),
                             format_double(s.ssim_dv / n), format_double(s.ssim_di / n),
                             format_double(s.ratio / n)});
    }
    write_csv(outdir / "psnr_by_level.csv", psnr_rows);
    write_csv(outdir / "ssim_by_level.csv", ssim_rows);
}

int cmd_evaluate(const std::string& predictions, const std::string& restoration,
                 const std::string& outdir) {
    if (predictions.empty() && restoration.empty())
        throw ArgumentError("evaluate needs --predictions and/or --restoration");
    fs::create_directories(outdir);
    if (!predictions.empty()) evaluate_predictions(predictions, outdir);
    if (!restoration.empty()) evaluate_restoration(restoration, outdir);
    std::cout << "evaluation written to " << outdir << "\n";
    return 0;
}

// Minimal deterministic chart: first CSV column is x, remaining columns are
// polylines; 8-bit PPM output.
int cmd_plot(const std::string& input, const std::string& output) {
    auto rows = read_csv(input);
    if (!rows.empty()) {
        // Drop a header row if any field is non-numeric.
        bool numeric = true;
        for (const auto& f : rows.front()) {
            try {
                (void)std::stod(f);
            } catch (...) {
                numeric = false;
            }
        }
        if (!numeric) rows.erase(rows.begin());
    }
    if (rows.empty()) throw FormatError(input + ": no data rows to plot");
    const size_t cols = rows.front().size();
    if (cols < 2) throw FormatError(input + ": need at least two columns");
    std::vector<std::vector<double>> data;
    for (const auto& row : rows) {
        if (row.size() != cols) throw FormatError(input + ": ragged rows");
        std::vector<double> r;
        for (const auto& f : row) r.push_back(std::stod(f));
        data.push_back(std::move(r));
    }

    const int width = 640, height = 480, margin = 48;
    std::vector<std::array<uint8_t, 3>> canvas(static_cast<size_t>(width) * height,
                                               {255, 255, 255});
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& r : data) {
        xmin = std::min(xmin, r[0]);
        xmax = std::max(xmax, r[0]);
        for (size_t c = 1; c < cols; ++c) {
            ymin = std::min(ymin, r[c]);
            ymax = std::max(ymax, r[c]);
        }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    auto px = [&](double x) {
        return margin + static_cast<int>((x - xmin) / (xmax - xmin) * (width - 2 * margin));
    };
    auto py = [&](double y) {
        return height - margin -
               static_cast<int>((y - ymin) / (ymax - ymin) * (height - 2 * margin));
    };
    auto put = [&](int x, int y, std::array<uint8_t, 3> rgb) {
        if (x >= 0 && y >= 0 && x < width && y < height)
            canvas[static_cast<size_t>(y) * width + x] = rgb;
    };
    auto line = [&](int x0, int y0, int x1, int y1, std::array<uint8_t, 3> rgb) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        for (;;) {
            put(x0, y0, rgb);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    };

    line(margin, height - margin, width - margin, height - margin, {0, 0, 0});
    line(margin, margin, margin, height - margin, {0, 0, 0});
    const std::array<std::array<uint8_t, 3>, 4> palette{
        {{202, 75, 52}, {52, 101, 164}, {78, 154, 6}, {163, 52, 156}}};
    for (size_t c = 1; c < cols; ++c) {
        const auto rgb = palette[(c - 1) % palette.size()];
        for (size_t i = 1; i < data.size(); ++i)
            line(px(data[i - 1][0]), py(data[i - 1][c]), px(data[i][0]), py(data[i][c]), rgb);
        for (const auto& r : data)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) put(px(r[0]) + dx, py(r[c]) + dy, rgb);
    }

    const fs::path out_path(output);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(output + ": cannot open for writing");
    out << "P6\n" << width << " " << height << "\n255\n";
    for (const auto& rgb : canvas)
        out.write(reinterpret_cast<const char*>(rgb.data()), 3);
    std::cout << "plot written to " << output << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Depth-variant deconvolution of out-of-focus fluorescence microscopy images"};
    app.require_subcommand(1);

    CommonOpts common;

    // psf
    auto* psf = app.add_subcommand("psf", "Build and export one defocus-level PSF kernel");
    int psf_level = 0;
    std::string psf_out = ".";
    psf->add_option("--level", psf_level, "Defocus level index")->required();
    psf->add_option("--out", psf_out, "Output directory")->capture_default_str();
    psf->add_option("--config", common.config_path, "Pipeline config file");

    // synth
    auto* synth = app.add_subcommand("synth", "Synthesize the labeled patch dataset");
    std::string synth_in, synth_out;
    uint64_t synth_seed = 1;
    double synth_gain = -1;
    int synth_crops = -1;
    std::vector<int> synth_levels;
    bool synth_no_bg = false;
    synth->add_option("--input", synth_in, "Directory of source PGMs (or stack subdirs)")
        ->required();
    synth->add_option("--output", synth_out, "Patch store directory")->required();
    synth->add_option("--seed", synth_seed, "Master seed")->capture_default_str();
    synth->add_option("--gain", synth_gain, "Poisson gain (photons per count)");
    synth->add_option("--levels", synth_levels, "Subset of defocus levels");
    synth->add_option("--crops", synth_crops, "Crops per (image, level)");
    synth->add_flag("--no-bg-relabel", synth_no_bg, "Keep level labels on background patches");
    synth->add_option("--config", common.config_path, "Pipeline config file");

    // train
    auto* train = app.add_subcommand("train", "Train the defocus-level classifier");
    std::string train_data, train_out;
    int train_epochs = -1, train_batch = -1;
    uint64_t train_seed = 1;
    bool train_no_bg = false;
    double train_bn = -1, train_lr = -1, train_decay = -1;
    train->add_option("--data", train_data, "Patch store directory")->required();
    train->add_option("--out", train_out, "Model output path")->required();
    train->add_option("--epochs", train_epochs, "Training epochs");
    train->add_option("--seed", train_seed, "Training seed")->capture_default_str();
    train->add_flag("--no-bg", train_no_bg, "Train the 11-class variant on raw level labels");
    train->add_option("--bn-momentum", train_bn, "Batch-norm running-stat momentum");
    train->add_option("--lr", train_lr, "Adam learning rate");
    train->add_option("--lr-decay", train_decay, "Inverse-time learning-rate decay");
    train->add_option("--batch", train_batch, "Batch size");
    train->add_option("--config", common.config_path, "Pipeline config file");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "Classify every patch of a split");
    std::string pred_model, pred_data, pred_out;
    predict_cmd->add_option("--model", pred_model, "Model file")->required();
    predict_cmd->add_option("--data", pred_data, "Split directory (train/val/test)")->required();
    predict_cmd->add_option("--out", pred_out, "Predictions CSV")->required();

    // deconvolve
    auto* dec = app.add_subcommand("deconvolve", "Restore a whole image with AWDVD");
    std::string dec_in, dec_model, dec_out;
    int dec_stride = -1, dec_iter = -1;
    bool dec_invariant = false;
    dec->add_option("--input", dec_in, "Input 16-bit PGM")->required();
    dec->add_option("--model", dec_model, "Model file")->required();
    dec->add_option("--stride", dec_stride, "Patch grid stride (1..84)");
    dec->add_option("--iterations", dec_iter, "Richardson-Lucy iterations");
    dec->add_option("--output", dec_out, "Restored PGM path")->required();
    dec->add_flag("--depth-invariant", dec_invariant,
                  "Use the in-focus kernel for every patch");
    dec->add_option("--config", common.config_path, "Pipeline config file");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Emit metric tables from run outputs");
    std::string eval_pred, eval_restoration, eval_outdir;
    eval->add_option("--predictions", eval_pred, "Predictions CSV from `predict`");
    eval->add_option("--restoration", eval_restoration,
                     "CSV of level,reference,degraded,depth_variant,depth_invariant paths");
    eval->add_option("--outdir", eval_outdir, "Output directory")->required();

    // plot
    auto* plot = app.add_subcommand("plot", "Render a CSV as a simple raster chart");
    std::string plot_in, plot_out;
    plot->add_option("--input", plot_in, "Input CSV")->required();
    plot->add_option("--out", plot_out, "Output PPM")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (psf->parsed()) return cmd_psf(common, psf_level, psf_out);
        if (synth->parsed())
            return cmd_synth(common, synth_in, synth_out, synth_seed, synth_gain, synth_levels,
                             synth_crops, synth_no_bg);
        if (train->parsed())
            return cmd_train(common, train_data, train_out, train_epochs, train_seed, train_no_bg,
                             train_bn, train_lr, train_decay, train_batch);
        if (predict_cmd->parsed()) return cmd_predict(pred_model, pred_data, pred_out);
        if (dec->parsed())
            return cmd_deconvolve(common, dec_in, dec_model, dec_stride, dec_iter, dec_out,
                                  dec_invariant);
        if (eval->parsed()) return cmd_evaluate(eval_pred, eval_restoration, eval_outdir);
        if (plot->parsed()) return cmd_plot(plot_in, plot_out);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
