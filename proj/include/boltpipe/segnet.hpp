#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "boltpipe/parallel.hpp"
#include "boltpipe/point_cloud.hpp"

namespace boltpipe::segnet {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Mat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;

inline constexpr std::size_t kFeatureDims = 6;  // x, y, z, lambda1, lambda2, lambda3

struct ArchConfig {
    std::size_t k = 20;
    std::vector<std::size_t> tnet_edge{64, 128};  // shared edge MLP of the transform block
    std::size_t tnet_point = 256;                 // per-point layer before the global max
    std::vector<std::size_t> tnet_fc{128};        // dense layers on the pooled vector
    std::vector<std::size_t> edge_widths{64, 64, 64};
    std::size_t agg = 256;
    std::vector<std::size_t> head{256, 128};
    double leaky_slope = 0.2;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    bool standardize_lambda = false;  // per-tile z-scoring of the lambda columns

    void validate() const;
    bool operator==(const ArchConfig&) const = default;
};

enum class Mode { train, eval };  // batch statistics vs running statistics

struct SampleTile {
    Mat features;                      // n_s x 6, XYZ centered on the tile centroid
    std::vector<std::uint8_t> labels;  // zeros when the source cloud is unlabeled
    std::vector<PointId> ids;          // source point of each row
};

struct TileConfig {
    std::size_t tile_size = 2048;
    double block_size = 2.0;  // XY footprint of a block column (m)
    std::uint64_t seed = 7;
};

/// Splits the cloud into block_size x block_size XY columns. A block with m >=
/// n_s points is shuffled and cut into ceil(m / n_s) tiles, the last one filled
/// up with other points of the block drawn without replacement; a smaller block
/// yields one tile holding all its points plus draws with replacement. Every
/// input point therefore lands in at least one tile.
std::vector<SampleTile> make_tiles(const PointCloud& cloud, const TileConfig& cfg);

struct KnnGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<PointId> nbr;  // row i's neighbors at [i*k, (i+1)*k), nearest first
    PointId at(std::size_t i, std::size_t t) const { return nbr[i * k + t]; }
};

/// Exact k nearest rows in Euclidean feature distance, self excluded, ties by
/// ascending row id. Requires k < rows.
KnnGraph knn_graph(const Mat& features, std::size_t k, Execution exec = Execution::parallel);

/// One linear layer with optional batch norm and leaky rectifier. Edge layers
/// read concat(f_i, f_j - f_i) over a neighbor graph.
struct LayerSpec {
    std::string name;
    bool edge = false;
    std::size_t in = 0, out = 0;
    bool bn = false, act = false;
    std::size_t w = 0, b = 0, gamma = 0, beta = 0;  // indices into params()
    std::size_t bn_slot = 0;                        // running stats at buffers()[2*slot], [2*slot+1]
};

/// Flat parameter storage in declaration order; gradients use the same layout.
class SegModel {
public:
    SegModel() = default;
    SegModel(const ArchConfig& arch, std::uint64_t seed);

    const ArchConfig& arch() const { return arch_; }
    std::vector<Mat>& params() { return params_; }
    const std::vector<Mat>& params() const { return params_; }
    std::vector<Mat>& buffers() { return buffers_; }  // batch-norm running mean / var
    const std::vector<Mat>& buffers() const { return buffers_; }
    const std::vector<std::string>& param_names() const { return names_; }
    std::size_t parameter_count() const;

    /// Index of a named tensor, e.g. "head.out.b"; ContractError if absent.
    std::size_t param_index(const std::string& name) const;

    const std::vector<LayerSpec>& layers() const { return layers_; }

private:
    friend SegModel load_model(const std::string&);
    void build(std::uint64_t seed, bool init);

    ArchConfig arch_;
    std::vector<Mat> params_;
    std::vector<Mat> buffers_;
    std::vector<std::string> names_;
    std::vector<LayerSpec> layers_;
};

struct BnBatchStats {
    std::vector<RowVec> mean;  // one entry per batch-norm layer, layer order
    std::vector<RowVec> var;   // biased
    std::vector<std::size_t> rows;
};

struct ForwardResult {
    std::vector<double> logits;
    Mat3 transform;
    BnBatchStats bn;  // filled in train mode
};

/// Throws NumericalFault naming the first layer with a non-finite activation.
ForwardResult forward(const SegModel& model, const Mat& features, Mode mode);

/// Mean over points of -w_pos*y*log(sig(x)) - w_neg*(1-y)*log(1-sig(x)),
/// evaluated through softplus so log(0) never occurs.
double weighted_bce(const std::vector<double>& logits, const std::vector<std::uint8_t>& labels, double w_pos,
                    double w_neg);

struct GradientResult {
    double loss = 0.0;
    std::vector<Mat> grads;  // same layout as SegModel::params()
    BnBatchStats bn;
};

/// Analytic gradient of weighted_bce(forward(train mode)). Neighbor selection
/// is constant; max-pool ties route to the lowest point id.
GradientResult gradient(const SegModel& model, const SampleTile& tile, double w_pos, double w_neg);

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 32;
    double w_pos = 15.0 / 16.0;
    double w_neg = 1.0 / 16.0;
    double lr_decay = 0.5;
    std::size_t lr_decay_every = 16;  // epochs
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 7;
    std::size_t tile_size = 2048;
    Execution exec = Execution::serial;  // parallel: tiles of a batch run concurrently
    std::size_t folds = 0;               // > 1: hold out one fold of tiles for validation
    Mode val_norm = Mode::train;         // normalization used for the validation loss
    bool verbose = false;

    void validate() const;
};

struct TrainResult {
    std::vector<double> train_loss;  // mean tile loss seen during each epoch
    std::vector<double> val_loss;    // loss after each epoch under val_norm (empty without validation tiles)
};

/// Adam over shuffled mini-batches; the batch gradient is the mean tile
/// gradient. Throws NumericalFault on a non-finite loss.
TrainResult train(SegModel& model, const std::vector<SampleTile>& tiles, const std::vector<SampleTile>& validation,
                  const TrainConfig& cfg);

struct TileSplit {
    std::vector<SampleTile> train;
    std::vector<SampleTile> validation;
};

/// Deterministic k-fold split of tiles: fold `fold` of `folds` (after a seeded
/// shuffle) becomes validation. folds <= 1 keeps every tile for training.
TileSplit split_folds(const std::vector<SampleTile>& tiles, std::size_t folds, std::size_t fold, std::uint64_t seed);

/// Mean loss over tiles without updating anything. Mode::train normalizes
/// each tile with its own batch statistics, as during training.
double evaluate_loss(const SegModel& model, const std::vector<SampleTile>& tiles, double w_pos, double w_neg,
                     Mode norm = Mode::train);

struct PredictConfig {
    std::size_t tile_size = 2048;
    std::uint64_t seed = 7;
    Execution exec = Execution::parallel;
    Mode norm = Mode::train;  // per-tile batch statistics; Mode::eval uses the running averages
};

/// Copy of the cloud with predicted labels and a "probability" channel. Points
/// sampled into several tiles average their probabilities; label 1 iff the
/// mean exceeds 0.5.
PointCloud predict(const SegModel& model, const PointCloud& cloud, const PredictConfig& cfg);

void save_model(const SegModel& model, const std::string& path);
SegModel load_model(const std::string& path);

} // namespace boltpipe::segnet
