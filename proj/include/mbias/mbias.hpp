// Copyright 2026 The mbias Authors. All Rights Reserved.
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


#pragma once

#include "mbias/benchgen.hpp"
#include "mbias/cache.hpp"
#include "mbias/calib.hpp"
#include "mbias/core.hpp"
#include "mbias/detect.hpp"
#include "mbias/error.hpp"
#include "mbias/eval.hpp"
#include "mbias/http.hpp"
#include "mbias/io.hpp"
#include "mbias/lexicon.hpp"
#include "mbias/model.hpp"
#include "mbias/pool.hpp"
#include "mbias/random.hpp"
#include "mbias/similarity.hpp"
#include "mbias/text.hpp"
