"""Self-test runner."""

from beatssl.selftest import SelfTestRunner, run_selftest


def test_quick_selftest_passes():
    """Test that every numerical invariant holds on a quick run."""
    summary = run_selftest(seed=1, quick=True)
    failures = {r.test_name: r.error or r.details for r in summary.results if not r.success}
    assert failures == {}
    assert summary.total_tests == 9 and summary.passed == 9
    assert all(r.duration_ms is not None for r in summary.results)


def test_raising_check_is_recorded_as_failure():
    class Broken(SelfTestRunner):
        def checks(self):
            return [self.check_kors_identity, self.check_broken]

        def check_broken(self):
            raise RuntimeError("boom")

    summary = Broken(quick=True).run()
    assert summary.total_tests == 2 and summary.failed == 1
    assert not summary.success
    broken = summary.results[1]
    assert broken.test_name == "broken" and broken.error == "boom"
