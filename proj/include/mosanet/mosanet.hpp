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

#include "mosanet/analysis.hpp"
#include "mosanet/archive.hpp"
#include "mosanet/audio.hpp"
#include "mosanet/checkpoint.hpp"
#include "mosanet/commands.hpp"
#include "mosanet/config.hpp"
#include "mosanet/data.hpp"
#include "mosanet/encoder.hpp"
#include "mosanet/error.hpp"
#include "mosanet/features.hpp"
#include "mosanet/image.hpp"
#include "mosanet/loss.hpp"
#include "mosanet/metrics.hpp"
#include "mosanet/model.hpp"
#include "mosanet/optim.hpp"
#include "mosanet/stft.hpp"
#include "mosanet/synthetic.hpp"
#include "mosanet/training.hpp"
#include "mosanet/util.hpp"
