#pragma once

#include "com/error.hpp"
#include "com/value.hpp"
#include "com/schema.hpp"
#include "com/vector.hpp"
#include "com/store.hpp"
#include "com/expr/ast.hpp"
#include "com/expr/parser.hpp"
#include "com/expr/eval.hpp"
#include "com/expr/columns.hpp"
#include "com/setops.hpp"
