// Copyright 2026 The mosanet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mosanet/model.hpp"

namespace mosanet {

// Adam with bias correction. Moment buffers mirror the weight layout.
template <typename S>
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  explicit Adam(const ModelWeights<S>& like, Options opts = {})
      : opts_(opts), m_(like.zeros_like()), v_(like.zeros_like()) {}

  void step(ModelWeights<S>* w, const ModelWeights<S>& grads, double learning_rate) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const S b1 = static_cast<S>(opts_.beta1);
    const S b2 = static_cast<S>(opts_.beta2);
    const S lr = static_cast<S>(learning_rate * std::sqrt(c2) / c1);
    const S eps = static_cast<S>(opts_.epsilon * std::sqrt(c2));

    std::vector<Mat<S>*> params, ms, vs;
    std::vector<const Mat<S>*> gs;
    w->for_each_parameter([&](const std::string&, Mat<S>& p) { params.push_back(&p); });
    m_.for_each_parameter([&](const std::string&, Mat<S>& p) { ms.push_back(&p); });
    v_.for_each_parameter([&](const std::string&, Mat<S>& p) { vs.push_back(&p); });
    grads.for_each_parameter([&](const std::string&, const Mat<S>& p) { gs.push_back(&p); });
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto m = ms[i]->array();
      auto v = vs[i]->array();
      const auto g = gs[i]->array();
      m = b1 * m + (S(1) - b1) * g;
      v = b2 * v + (S(1) - b2) * g.square();
      params[i]->array() -= lr * m / (v.sqrt() + eps);
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  Options opts_;
  ModelWeights<S> m_;
  ModelWeights<S> v_;
  std::uint64_t t_ = 0;
};

}  // namespace mosanet
