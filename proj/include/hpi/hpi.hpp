// Copyright 2026 The hpi Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "hpi/cli.hpp"
#include "hpi/cost.hpp"
#include "hpi/error.hpp"
#include "hpi/he.hpp"
#include "hpi/model.hpp"
#include "hpi/nonpoly/circuit.hpp"
#include "hpi/nonpoly/fixed_int.hpp"
#include "hpi/nonpoly/functions.hpp"
#include "hpi/nonpoly/garble.hpp"
#include "hpi/nonpoly/ot.hpp"
#include "hpi/nonpoly/secure_eval.hpp"
#include "hpi/numeric.hpp"
#include "hpi/packing.hpp"
#include "hpi/protocol/engine.hpp"
#include "hpi/protocol/party.hpp"
#include "hpi/protocol/transcript.hpp"
#include "hpi/rng.hpp"
#include "hpi/sharing.hpp"
