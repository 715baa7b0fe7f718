# Copyright 2026 The chanprune Authors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Structured channel pruning for explicit computation graphs."""

import json

from ._core import Dataset, Error, Graph, PruneOutcome, Weights, evaluate, prune, train

__all__ = ["Dataset", "Error", "Graph", "PruneOutcome", "Weights", "evaluate", "groups", "prune", "events", "train"]


def groups(graph):
    """Group table of `graph` as a dict."""
    return json.loads(graph.groups())


def events(outcome):
    """Prune events of `outcome` as a list of dicts."""
    return json.loads(outcome.events_json)
