#pragma once

#include "asrpu/acoustic_model.hpp"
#include "asrpu/command_interface.hpp"
#include "asrpu/config.hpp"
#include "asrpu/ctc_decoder.hpp"
#include "asrpu/error.hpp"
#include "asrpu/execution_unit.hpp"
#include "asrpu/frontend.hpp"
#include "asrpu/hypothesis.hpp"
#include "asrpu/kernel.hpp"
#include "asrpu/lexicon.hpp"
#include "asrpu/memory.hpp"
#include "asrpu/model.hpp"
#include "asrpu/ngram_lm.hpp"
#include "asrpu/pe_cost.hpp"
#include "asrpu/reference.hpp"
#include "asrpu/runner.hpp"
#include "asrpu/schedule.hpp"
#include "asrpu/settings.hpp"
#include "asrpu/wav.hpp"
