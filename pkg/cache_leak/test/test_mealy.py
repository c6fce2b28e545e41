"""
Mealy 机抽象测试
玩具机、探测、知识集与最终知识集、策略诱导的划分
"""

import os
import sys
import unittest

current_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(os.path.dirname(current_dir))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from cache_leak.src.cache_core import CacheSetState, Observation, Policy
from cache_leak.src.errors import CacheLeakError, UnknownInputError
from cache_leak.src.mealy import (CacheMachine, Probe, TableMachine, ToyMachine, evaluate_strategy,
                                  final_knowledge_set, knowledge_set, run_trace, split)


class TestToyMachine(unittest.TestCase):
    """七状态玩具机"""

    def setUp(self):
        self.machine = ToyMachine()

    def test_view(self):
        self.assertEqual(self.machine.view(0, 3), 0)
        self.assertEqual(self.machine.view(2, 3), 2)
        self.assertEqual(self.machine.view(4, 3), 2)
        self.assertEqual(self.machine.view(5, 3), 1)

    def test_upd(self):
        self.assertEqual(self.machine.upd(1, 3), 2)
        self.assertEqual(self.machine.upd(3, 3), 3)
        self.assertEqual(self.machine.upd(4, 3), 4)
        self.assertEqual(self.machine.upd(6, 3), 5)

    def test_unknown_input(self):
        with self.assertRaises(UnknownInputError):
            self.machine.view(0, 9)
        with self.assertRaises(UnknownInputError):
            run_trace(self.machine, 0, [0, 7])

    def test_run_trace(self):
        state, observations = run_trace(self.machine, 0, [0, 2])
        self.assertEqual(observations, (2, 0))
        self.assertEqual(state, 1)


class TestKnowledgeSets(unittest.TestCase):
    """K(p) 与 FK(p)"""

    def setUp(self):
        self.machine = ToyMachine()
        self.states = self.machine.states

    def test_empty_probe(self):
        self.assertEqual(knowledge_set(self.machine, self.states, Probe()), self.states)
        self.assertEqual(final_knowledge_set(self.machine, self.states, Probe()), self.states)

    def test_single_step(self):
        probe = Probe.of((0, 1))
        self.assertEqual(knowledge_set(self.machine, self.states, probe), frozenset({2, 3, 4, 5, 6}))
        self.assertEqual(final_knowledge_set(self.machine, self.states, probe),
                         frozenset({1, 2, 3, 4, 5}))

    def test_two_steps(self):
        probe = Probe.of((0, 2)).extend(2, 0)
        self.assertEqual(len(probe), 2)
        self.assertEqual(probe.inputs, (0, 2))
        self.assertEqual(knowledge_set(self.machine, self.states, probe), frozenset({0}))
        self.assertEqual(final_knowledge_set(self.machine, self.states, probe), frozenset({1}))

    def test_incoherent_probe(self):
        probe = Probe.of((0, 0))
        self.assertEqual(knowledge_set(self.machine, self.states, probe), frozenset())

    def test_split_follows_output_order(self):
        groups = split(self.machine, self.states, 0)
        self.assertEqual(list(groups), [1, 2])
        self.assertEqual(sorted(groups[2]), [0, 1])


class TestStrategyPartition(unittest.TestCase):
    """给定策略诱导的划分"""

    def test_sum_strategy_on_toy_machine(self):
        """下一个输入取已有观察值之和：七个单点知识集，探测长度不超过 4"""
        machine = ToyMachine()
        partition = evaluate_strategy(machine, machine.states, lambda history: sum(history), 4)
        self.assertEqual(partition.count, 7)
        self.assertTrue(all(len(k) == 1 for k in partition.knowledge_sets))
        self.assertEqual(frozenset().union(*partition.knowledge_sets), machine.states)
        self.assertEqual(partition.max_probe_length, 4)
        self.assertEqual(sorted(len(p) for p in partition.probes), [2, 2, 3, 3, 3, 4, 4])
        for members, probe in zip(partition.knowledge_sets, partition.probes):
            self.assertEqual(knowledge_set(machine, machine.states, probe), members)

    def test_constant_strategy_never_refines(self):
        machine = ToyMachine()
        partition = evaluate_strategy(machine, [3, 4], lambda history: 3, 3)
        self.assertEqual(partition.count, 1)
        self.assertEqual(partition.max_probe_length, 0)


class TestTableAndCacheMachines(unittest.TestCase):

    def test_table_machine(self):
        transitions = {('s', 'a'): 't', ('t', 'a'): 's'}
        observations = {('s', 'a'): 0, ('t', 'a'): 1}
        machine = TableMachine(transitions, observations)
        self.assertEqual(machine.states, frozenset({'s', 't'}))
        self.assertEqual(run_trace(machine, 's', ['a', 'a', 'a']), ('t', (0, 1, 0)))

    def test_table_machine_must_be_total(self):
        with self.assertRaises(CacheLeakError):
            TableMachine({('s', 'a'): 't', ('t', 'b'): 's'}, {('s', 'a'): 0, ('t', 'b'): 1})
        with self.assertRaises(CacheLeakError):
            TableMachine({('s', 'a'): 's'}, {('t', 'a'): 0})

    def test_cache_machine(self):
        blocks = ['b0', 'b1', 'x0', 'x1']
        machine = CacheMachine('lru', 2, blocks)
        self.assertEqual(machine.outputs, (Observation.HIT, Observation.MISS))
        self.assertEqual(machine.inputs, ('b0', 'b1', 'x0', 'x1'))
        start = CacheSetState(2, ['x0', 'x1'], blocks)
        state, observations = run_trace(machine, start, ['b0', 'b0', 'x0'])
        self.assertEqual(observations, (Observation.MISS, Observation.HIT, Observation.HIT))
        self.assertEqual(state.lines, ('x0', 'b0'))
        self.assertIs(machine.policy, Policy.LRU)


def run_all_tests():
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()
    for case in (TestToyMachine, TestKnowledgeSets, TestStrategyPartition, TestTableAndCacheMachines):
        suite.addTests(loader.loadTestsFromTestCase(case))
    return unittest.TextTestRunner(verbosity=2).run(suite).wasSuccessful()


if __name__ == '__main__':
    sys.exit(0 if run_all_tests() else 1)
