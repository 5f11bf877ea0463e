// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dpa/answers.hpp"
#include "dpa/categorical_policy.hpp"
#include "dpa/checkpoint.hpp"
#include "dpa/env.hpp"
#include "dpa/error.hpp"
#include "dpa/eval.hpp"
#include "dpa/grpo.hpp"
#include "dpa/io.hpp"
#include "dpa/policy.hpp"
#include "dpa/random.hpp"
#include "dpa/rewards.hpp"
#include "dpa/sft.hpp"
#include "dpa/token_policy.hpp"
