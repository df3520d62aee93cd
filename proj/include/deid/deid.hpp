#ifndef DEID_DEID_HPP
#define DEID_DEID_HPP

#include "deid/annotation.hpp"
#include "deid/augmenter.hpp"
#include "deid/backend_client.hpp"
#include "deid/config.hpp"
#include "deid/conll.hpp"
#include "deid/dates.hpp"
#include "deid/deid_pipeline.hpp"
#include "deid/errors.hpp"
#include "deid/evaluator.hpp"
#include "deid/label_set.hpp"
#include "deid/llm_markup.hpp"
#include "deid/rule_engine.hpp"
#include "deid/tokenizer.hpp"

#endif  // DEID_DEID_HPP
