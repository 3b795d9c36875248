"""
コマンド解析のプロパティテスト
"""

import unittest

from hypothesis import assume, given, settings
from hypothesis import strategies as st

from memobility.cli.parser import FLAG_OPTIONS, VALID_COMMANDS, VALUE_OPTIONS, ArgumentParser

# 必須オプションを持たないコマンド
STANDALONE_COMMANDS = ["help", "version"]


class TestCommandParsingProperty(unittest.TestCase):
    """任意の引数列に対する解析の性質"""

    def setUp(self):
        self.parser = ArgumentParser()

    @given(command=st.sampled_from(STANDALONE_COMMANDS))
    @settings(max_examples=20)
    def test_standalone_commands_are_valid(self, command):
        parsed = self.parser.parse([command])
        self.assertEqual(parsed.command, command)
        self.assertTrue(self.parser.validate(parsed).is_valid)

    @given(command=st.text(alphabet=st.characters(min_codepoint=97, max_codepoint=122), min_size=1, max_size=20))
    @settings(max_examples=100)
    def test_unknown_commands_are_rejected(self, command):
        assume(command not in VALID_COMMANDS)
        validation = self.parser.validate(self.parser.parse([command]))
        self.assertFalse(validation.is_valid)
        self.assertIn("unknown command", validation.errors[0].lower())

    @given(seed=st.integers(min_value=0, max_value=2 ** 32), n=st.integers(min_value=10, max_value=10 ** 6),
           sigma=st.floats(min_value=0.01, max_value=5.0))
    @settings(max_examples=100)
    def test_value_options_are_converted(self, seed, n, sigma):
        """値付きオプションは型変換されて保持される"""
        parsed = self.parser.parse(["simulate", "--seed", str(seed), "--n", str(n), "--sigma", repr(sigma)])
        self.assertEqual(parsed.options["seed"], seed)
        self.assertEqual(parsed.options["n"], n)
        self.assertEqual(parsed.options["sigma"], sigma)
        self.assertTrue(self.parser.validate(parsed).is_valid)

    @given(flags=st.lists(st.sampled_from(sorted(FLAG_OPTIONS)), max_size=6))
    @settings(max_examples=100)
    def test_flags_never_become_arguments(self, flags):
        parsed = self.parser.parse(["report", *flags])
        self.assertEqual(parsed.args, [])
        self.assertEqual(parsed.errors, [])
        for flag in flags:
            self.assertTrue(parsed.options[FLAG_OPTIONS[flag]])

    @given(option=st.sampled_from(sorted(VALUE_OPTIONS)))
    @settings(max_examples=50)
    def test_trailing_value_option_is_reported(self, option):
        parsed = self.parser.parse(["params", option])
        self.assertIn(f"Option {option} requires a value.", parsed.errors)


if __name__ == "__main__":
    unittest.main()
