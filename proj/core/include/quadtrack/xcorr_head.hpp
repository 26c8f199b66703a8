#pragma once

#include "quadtrack/embed_net.hpp"
#include "quadtrack/tensor.hpp"

namespace quadtrack {

/// Similarity of every search sub-window against the exemplar:
/// v[u] = <phi(z), window_u(phi(x))> + b.
template <typename T>
struct BasicScoreMap {
    BasicGrid<T> values;
    Shape exemplar_shape;
    Shape search_shape;

    std::size_t rows() const { return values.rows(); }
    std::size_t cols() const { return values.cols(); }
    T operator()(std::size_t r, std::size_t c) const { return values(r, c); }
};

using ScoreMap = BasicScoreMap<float>;

template <typename T>
BasicScoreMap<T> score_map(const BasicEmbedNet<T>& net, const BasicTensor<T>& exemplar_feat,
                           const BasicTensor<T>& search_feat);

/// Same as above with an explicit score bias.
template <typename T>
BasicScoreMap<T> score_map(T score_bias, const BasicTensor<T>& exemplar_feat, const BasicTensor<T>& search_feat);

template <typename T>
struct ScoreMapGrads {
    BasicTensor<T> exemplar;
    BasicTensor<T> search;
    T bias = T(0);
};

template <typename T>
ScoreMapGrads<T> score_map_grad(const BasicGrid<T>& upstream, const BasicTensor<T>& exemplar_feat,
                                const BasicTensor<T>& search_feat);

}  // namespace quadtrack
