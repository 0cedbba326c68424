#include "defocus/delpnet.hpp"

#include <dlfcn.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "defocus/csv.hpp"
#include "defocus/errors.hpp"

namespace defocus {

namespace nn::detail {

namespace {

// OpenBLAS is loaded lazily so the OPENBLAS_CORETYPE hint below is in place
// before the library's own init runs. On cpuid-masked VMs its DYNAMIC_ARCH
// detection otherwise falls back to generic SSE2 kernels, a ~3x slowdown.
// An explicit user-provided OPENBLAS_CORETYPE always wins.
struct BlasRuntime {
    // CBLAS row-major/transpose constants.
    static constexpr int kRowMajor = 101, kNoTrans = 111, kTrans = 112;
    using SgemmFn = void (*)(int, int, int, int, int, int, float, const float*, int,
                             const float*, int, float, float*, int);
    using DgemmFn = void (*)(int, int, int, int, int, int, double, const double*, int,
                             const double*, int, double, double*, int);
    SgemmFn sgemm = nullptr;
    DgemmFn dgemm = nullptr;

    BlasRuntime() {
        if (!std::getenv("OPENBLAS_CORETYPE")) {
            if (__builtin_cpu_supports("avx512f"))
                setenv("OPENBLAS_CORETYPE", "SkylakeX", 0);
            else if (__builtin_cpu_supports("avx2"))
                setenv("OPENBLAS_CORETYPE", "Haswell", 0);
        }
        void* handle = nullptr;
        for (const char* name : {"libopenblas.so.0", "libopenblas.so"})
            if ((handle = dlopen(name, RTLD_NOW | RTLD_LOCAL))) break;
        if (!handle) throw std::runtime_error("cannot load libopenblas");
        sgemm = reinterpret_cast<SgemmFn>(dlsym(handle, "cblas_sgemm"));
        dgemm = reinterpret_cast<DgemmFn>(dlsym(handle, "cblas_dgemm"));
        if (!sgemm || !dgemm) throw std::runtime_error("libopenblas lacks cblas_{s,d}gemm");
        // Sample-level OpenMP parallelism owns the cores; BLAS itself runs
        // single-threaded.
        if (auto set = reinterpret_cast<void (*)(int)>(dlsym(handle, "openblas_set_num_threads")))
            set(1);
    }
};

BlasRuntime& blas() {
    static BlasRuntime runtime;
    return runtime;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    const BlasRuntime& rt = blas();
    rt.sgemm(BlasRuntime::kRowMajor, trans_a ? BlasRuntime::kTrans : BlasRuntime::kNoTrans,
             trans_b ? BlasRuntime::kTrans : BlasRuntime::kNoTrans, m, n, k, alpha, a, lda, b,
             ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    const BlasRuntime& rt = blas();
    rt.dgemm(BlasRuntime::kRowMajor, trans_a ? BlasRuntime::kTrans : BlasRuntime::kNoTrans,
             trans_b ? BlasRuntime::kTrans : BlasRuntime::kNoTrans, m, n, k, alpha, a, lda, b,
             ldb, beta, c, ldc);
}

}  // namespace nn::detail

std::vector<nn::LayerSpec> delpnet_architecture(int num_classes, const DelpNetHyper& hyper) {
    using S = nn::LayerSpec;
    const int widths[7] = {64, 64, 128, 128, 256, 256, 512};
    std::vector<S> specs;
    int in_c = 1;
    for (int i = 0; i < 7; ++i) {
        specs.push_back(S::conv(in_c, widths[i], 3));
        specs.push_back(S::batchnorm(widths[i], hyper.bn_momentum));
        specs.push_back(S::relu());
        in_c = widths[i];
        if (i == 1 || i == 3 || i == 5) {
            specs.push_back(S::maxpool());
            specs.push_back(S::dropout(hyper.dropout_pool));
        }
    }
    specs.push_back(S::globalmaxpool());
    specs.push_back(S::dropout(hyper.dropout_dense));
    specs.push_back(S::dense(512, num_classes));
    return specs;
}

DelpNetModel make_delpnet(int num_classes, uint64_t seed, const DelpNetHyper& hyper) {
    if (num_classes < 2) throw std::invalid_argument("make_delpnet: need at least 2 classes");
    return nn::build_model<float>(delpnet_architecture(num_classes, hyper), seed);
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0)) throw std::invalid_argument("learning rate must be >= 0");
    if (!(lr_decay >= 0)) throw std::invalid_argument("lr decay must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (!(hyper.bn_momentum >= 0 && hyper.bn_momentum < 1))
        throw std::invalid_argument("batch-norm momentum must be in [0,1)");
}

double train_step(DelpNetModel& model, nn::Adam<float>& adam, const nn::Tensor4<float>& batch,
                  const std::vector<int>& labels, long step) {
    model.zero_grads();
    nn::Tensor4<float> logits = model.forward(batch, /*train=*/true);
    nn::Tensor4<float> grad;
    const double loss = nn::cross_entropy_backward(logits, labels, grad);
    if (!std::isfinite(loss)) throw DivergenceError("training loss is not finite", step);
    model.backward(std::move(grad));
    adam.step(model, step);
    return loss;
}

Prediction predict(DelpNetModel& model, const std::vector<float>& patch_pixels) {
    if (patch_pixels.size() != static_cast<size_t>(kPatchSize) * kPatchSize)
        throw std::invalid_argument("predict: patch must be 84x84");
    nn::Tensor4<float> x(1, 1, kPatchSize, kPatchSize);
    x.v.assign(patch_pixels.begin(), patch_pixels.end());
    const nn::Tensor4<float> logits = model.forward(std::move(x), /*train=*/false);
    Prediction pred;
    pred.probabilities = nn::softmax_row(logits.v.data(), logits.c);
    pred.label = 0;
    for (int i = 1; i < logits.c; ++i)
        if (pred.probabilities[i] > pred.probabilities[pred.label]) pred.label = i;
    return pred;
}

namespace {

int target_label(const LabeledPatch& p, bool use_bg) { return use_bg ? p.label : p.level; }

nn::Tensor4<float> gather_batch(const std::vector<LabeledPatch>& patches,
                                const std::vector<size_t>& order, size_t begin, size_t end,
                                bool use_bg, std::vector<int>& labels) {
    const int n = static_cast<int>(end - begin);
    nn::Tensor4<float> batch(n, 1, kPatchSize, kPatchSize);
    labels.resize(n);
    const size_t plane = static_cast<size_t>(kPatchSize) * kPatchSize;
    for (int i = 0; i < n; ++i) {
        const LabeledPatch& p = patches[order[begin + i]];
        std::memcpy(batch.v.data() + i * plane, p.pixels.data(), plane * sizeof(float));
        labels[i] = target_label(p, use_bg);
    }
    return batch;
}

}  // namespace

std::pair<double, double> evaluate_delpnet(DelpNetModel& model,
                                           const std::vector<LabeledPatch>& patches, bool use_bg,
                                           int batch_size) {
    if (patches.empty()) return {0.0, 0.0};
    std::vector<size_t> order(patches.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    double loss_sum = 0.0;
    long correct = 0;
    for (size_t begin = 0; begin < patches.size(); begin += batch_size) {
        const size_t end = std::min(patches.size(), begin + batch_size);
        std::vector<int> labels;
        nn::Tensor4<float> batch = gather_batch(patches, order, begin, end, use_bg, labels);
        const nn::Tensor4<float> logits = model.forward(std::move(batch), /*train=*/false);
        loss_sum += nn::cross_entropy(logits, labels) * static_cast<double>(end - begin);
        for (size_t s = 0; s < end - begin; ++s) {
            const float* row = logits.v.data() + s * logits.c;
            int best = 0;
            for (int i = 1; i < logits.c; ++i)
                if (row[i] > row[best]) best = i;
            if (best == labels[s]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(patches.size()),
            static_cast<double>(correct) / static_cast<double>(patches.size())};
}

TrainResult train_delpnet(const std::vector<LabeledPatch>& train_patches,
                          const std::vector<LabeledPatch>& val_patches, const TrainConfig& cfg) {
    cfg.validate();
    if (train_patches.empty()) throw std::invalid_argument("train_delpnet: no training patches");
    const int classes = cfg.use_bg ? 12 : 11;
    for (const auto& p : train_patches)
        if (target_label(p, cfg.use_bg) >= classes)
            throw std::invalid_argument("train_delpnet: label outside class range (patch " +
                                        p.id + ")");

    TrainResult result{make_delpnet(classes, cfg.seed, cfg.hyper), {}};
    nn::Adam<float> adam(cfg.learning_rate, cfg.lr_decay);

    std::vector<size_t> order(train_patches.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Xoshiro256 shuffle(derive_seed(cfg.seed, 0xE70C, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[shuffle.below(i + 1)]);

        double loss_sum = 0.0;
        long batches = 0;
        for (size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const size_t end = std::min(order.size(), begin + cfg.batch_size);
            std::vector<int> labels;
            nn::Tensor4<float> batch =
                gather_batch(train_patches, order, begin, end, cfg.use_bg, labels);
            loss_sum += train_step(result.model, adam, batch, labels, step);
            ++step;
            ++batches;
        }

        EpochLog row;
        row.epoch = epoch;
        row.step = step;
        row.train_loss = loss_sum / static_cast<double>(batches);
        if (!val_patches.empty()) {
            auto [vl, va] = evaluate_delpnet(result.model, val_patches, cfg.use_bg,
                                             cfg.batch_size);
            row.val_loss = vl;
            row.val_accuracy = va;
        }
        result.log.push_back(row);
    }
    return result;
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    std::vector<CsvRow> rows;
    rows.push_back({"epoch", "step", "train_loss", "val_loss", "val_accuracy"});
    for (const auto& row : log)
        rows.push_back({std::to_string(row.epoch), std::to_string(row.step),
                        format_double(row.train_loss), format_double(row.val_loss),
                        format_double(row.val_accuracy)});
    write_csv(path, rows);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

const char* kind_name(nn::LayerSpec::Kind k) {
    using K = nn::LayerSpec::Kind;
    switch (k) {
        case K::conv: return "conv";
        case K::batchnorm: return "batchnorm";
        case K::relu: return "relu";
        case K::maxpool: return "maxpool";
        case K::dropout: return "dropout";
        case K::globalmaxpool: return "globalmaxpool";
        case K::dense: return "dense";
    }
    return "?";
}

}  // namespace

void save_model(const DelpNetModel& model, const std::filesystem::path& path) {
    auto& m = const_cast<DelpNetModel&>(model);  // state() is logically const here
    std::ostringstream manifest;
    manifest << "delpnet v1\n";
    const auto rng_state = model.rng.state();
    manifest << "rng " << rng_state[0] << " " << rng_state[1] << " " << rng_state[2] << " "
             << rng_state[3] << "\n";
    manifest << "layers " << model.specs.size() << "\n";
    for (const auto& spec : model.specs) {
        manifest << kind_name(spec.kind);
        using K = nn::LayerSpec::Kind;
        if (spec.kind == K::conv) manifest << " " << spec.in << " " << spec.out << " " << spec.k;
        if (spec.kind == K::batchnorm) manifest << " " << spec.in << " " << spec.p;
        if (spec.kind == K::dropout) manifest << " " << spec.p;
        if (spec.kind == K::dense) manifest << " " << spec.in << " " << spec.out;
        manifest << "\n";
    }
    size_t total = 0;
    for (auto& layer : m.layers)
        for (auto* arr : layer->state()) total += arr->size();
    manifest << "floats " << total << "\n";
    manifest << "end\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path.string() + ": cannot open for writing");
    const std::string head = manifest.str();
    out << head;
    static_assert(sizeof(float) == 4);
    for (auto& layer : m.layers)
        for (auto* arr : layer->state())
            out.write(reinterpret_cast<const char*>(arr->data()),
                      static_cast<std::streamsize>(arr->size() * sizeof(float)));
    if (!out) throw FormatError(path.string() + ": write failed");
}

DelpNetModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string() + ": cannot open");

    std::string line;
    auto next_line = [&]() -> std::string {
        if (!std::getline(in, line)) throw FormatError(path.string() + ": truncated manifest");
        return line;
    };

    if (next_line() != "delpnet v1") throw FormatError(path.string() + ": bad model magic");

    std::array<uint64_t, 4> rng_state{};
    {
        std::istringstream ss(next_line());
        std::string tag;
        ss >> tag >> rng_state[0] >> rng_state[1] >> rng_state[2] >> rng_state[3];
        if (tag != "rng" || !ss) throw FormatError(path.string() + ": bad rng line");
    }

    size_t layer_count = 0;
    {
        std::istringstream ss(next_line());
        std::string tag;
        ss >> tag >> layer_count;
        if (tag != "layers" || !ss) throw FormatError(path.string() + ": bad layers line");
    }

    std::vector<nn::LayerSpec> specs;
    using K = nn::LayerSpec::Kind;
    for (size_t i = 0; i < layer_count; ++i) {
        std::istringstream ss(next_line());
        std::string kind;
        ss >> kind;
        if (kind == "conv") {
            int a, b, k;
            ss >> a >> b >> k;
            specs.push_back(nn::LayerSpec::conv(a, b, k));
        } else if (kind == "batchnorm") {
            int c;
            double p;
            ss >> c >> p;
            specs.push_back(nn::LayerSpec::batchnorm(c, p));
        } else if (kind == "relu") {
            specs.push_back(nn::LayerSpec::relu());
        } else if (kind == "maxpool") {
            specs.push_back(nn::LayerSpec::maxpool());
        } else if (kind == "dropout") {
            double p;
            ss >> p;
            specs.push_back(nn::LayerSpec::dropout(p));
        } else if (kind == "globalmaxpool") {
            specs.push_back(nn::LayerSpec::globalmaxpool());
        } else if (kind == "dense") {
            int a, b;
            ss >> a >> b;
            specs.push_back(nn::LayerSpec::dense(a, b));
        } else {
            throw FormatError(path.string() + ": unknown layer kind '" + kind + "'");
        }
        if (!ss) throw FormatError(path.string() + ": malformed layer line");
    }

    size_t declared_floats = 0;
    {
        std::istringstream ss(next_line());
        std::string tag;
        ss >> tag >> declared_floats;
        if (tag != "floats" || !ss) throw FormatError(path.string() + ": bad floats line");
    }
    if (next_line() != "end") throw FormatError(path.string() + ": missing manifest end");

    DelpNetModel model = nn::build_model<float>(specs, 0);
    model.rng = Xoshiro256::from_state(rng_state);

    size_t expected = 0;
    for (auto& layer : model.layers)
        for (auto* arr : layer->state()) expected += arr->size();
    if (expected != declared_floats)
        throw FormatError(path.string() + ": manifest float count does not match architecture");

    for (auto& layer : model.layers)
        for (auto* arr : layer->state()) {
            in.read(reinterpret_cast<char*>(arr->data()),
                    static_cast<std::streamsize>(arr->size() * sizeof(float)));
            if (static_cast<size_t>(in.gcount()) != arr->size() * sizeof(float))
                throw FormatError(path.string() + ": parameter blob truncated");
        }
    char extra;
    if (in.read(&extra, 1))
        throw FormatError(path.string() + ": trailing bytes after parameter blob");
    return model;
}

}  // namespace defocus
