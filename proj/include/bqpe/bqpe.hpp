// Copyright 2026 The bqpe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "bqpe/codes.hpp"
#include "bqpe/crt.hpp"
#include "bqpe/error.hpp"
#include "bqpe/fock.hpp"
#include "bqpe/gkp.hpp"
#include "bqpe/metrics.hpp"
#include "bqpe/noise.hpp"
#include "bqpe/noisy.hpp"
#include "bqpe/parallel.hpp"
#include "bqpe/qpe.hpp"
#include "bqpe/rng.hpp"
