// Copyright 2026 The trajflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef TRAJFLOW__TRAJFLOW_HPP_
#define TRAJFLOW__TRAJFLOW_HPP_

#include "trajflow/checkpoint.hpp"
#include "trajflow/config.hpp"
#include "trajflow/data.hpp"
#include "trajflow/encoder.hpp"
#include "trajflow/error.hpp"
#include "trajflow/evaluation.hpp"
#include "trajflow/flow.hpp"
#include "trajflow/format.hpp"
#include "trajflow/nn.hpp"
#include "trajflow/spline.hpp"
#include "trajflow/training.hpp"

#endif  // TRAJFLOW__TRAJFLOW_HPP_
