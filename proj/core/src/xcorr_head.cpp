#include "quadtrack/xcorr_head.hpp"

#include "quadtrack/tensor_ops.hpp"

namespace quadtrack {

template <typename T>
BasicScoreMap<T> score_map(T score_bias, const BasicTensor<T>& exemplar_feat, const BasicTensor<T>& search_feat) {
    BasicScoreMap<T> m{cross_correlate(exemplar_feat, search_feat), exemplar_feat.shape(), search_feat.shape()};
    for (auto& v : m.values.span()) v += score_bias;
    return m;
}

template <typename T>
BasicScoreMap<T> score_map(const BasicEmbedNet<T>& net, const BasicTensor<T>& exemplar_feat,
                           const BasicTensor<T>& search_feat) {
    return score_map(net.score_bias(), exemplar_feat, search_feat);
}

template <typename T>
ScoreMapGrads<T> score_map_grad(const BasicGrid<T>& upstream, const BasicTensor<T>& exemplar_feat,
                                const BasicTensor<T>& search_feat) {
    auto g = cross_correlate_grad(upstream, exemplar_feat, search_feat);
    double db = 0.0;
    for (T v : upstream.span()) db += static_cast<double>(v);
    return {std::move(g.exemplar), std::move(g.search), static_cast<T>(db)};
}

template BasicScoreMap<float> score_map(float, const Tensor&, const Tensor&);
template BasicScoreMap<double> score_map(double, const Tensor64&, const Tensor64&);
template BasicScoreMap<float> score_map(const EmbedNet&, const Tensor&, const Tensor&);
template BasicScoreMap<double> score_map(const EmbedNet64&, const Tensor64&, const Tensor64&);
template ScoreMapGrads<float> score_map_grad(const Grid&, const Tensor&, const Tensor&);
template ScoreMapGrads<double> score_map_grad(const Grid64&, const Tensor64&, const Tensor64&);

}  // namespace quadtrack
