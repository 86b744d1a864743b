// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The ofdmdpe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------


#pragma once

// Numerical core. YAML configs and experiment drivers live in config.hpp and
// experiments.hpp, which additionally need yaml-cpp.

#include "common.hpp"
#include "dpe.hpp"
#include "fim.hpp"
#include "montecarlo.hpp"
#include "ofdm.hpp"
#include "scenario.hpp"
#include "twostep.hpp"
