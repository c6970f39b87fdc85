// Copyright 2026 The RAGFuse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Umbrella header.

#pragma once

#include "ragfuse/adam.hpp"
#include "ragfuse/attention.hpp"
#include "ragfuse/checkpoint.hpp"
#include "ragfuse/dataset.hpp"
#include "ragfuse/fusion.hpp"
#include "ragfuse/grad_check.hpp"
#include "ragfuse/graph.hpp"
#include "ragfuse/matrix.hpp"
#include "ragfuse/metrics.hpp"
#include "ragfuse/model.hpp"
#include "ragfuse/ops.hpp"
#include "ragfuse/parallel.hpp"
#include "ragfuse/params.hpp"
#include "ragfuse/random.hpp"
#include "ragfuse/semantic.hpp"
#include "ragfuse/tensor.hpp"
#include "ragfuse/topology.hpp"
#include "ragfuse/trainer.hpp"
#include "ragfuse/version.hpp"
