"""Smoke test for the reapsnap Python bindings.

Build and install first:  pip install --no-build-isolation -e crates/py
"""

import tempfile

import reapsnap


def main():
    with tempfile.TemporaryDirectory() as tmp:
        image = reapsnap.SnapshotImage.create(tmp + "/image", 8192)
        assert image.num_pages == 8192 and image.page_size == 4096
        image.verify()

        rec_seq = reapsnap.invocation("helloworld", image.num_pages, 1)
        run_seq = reapsnap.invocation("helloworld", image.num_pages, 2)
        rec, trace, ws = reapsnap.record(image, rec_seq)
        assert ws.validate(image)
        assert ws.page(0) == image.page(trace.pages[0])

        lazy = reapsnap.restore(image, "lazy", run_seq)
        reap = reapsnap.restore(image, "prefetch", run_seq, ws=ws)
        assert rec.total_latency_us > lazy.total_latency_us > reap.total_latency_us
        assert reap.faults_served < lazy.faults_served
        assert abs(sum(reap.breakdown().values()) - reap.total_latency_us) < 1e-6

        again = reapsnap.PageTrace.decode(trace.encode())
        assert again.offsets == trace.offsets
        assert reapsnap.footprint_mb(trace) == len(trace) * 4096 / 2**20
        reuse = reapsnap.reuse(trace, trace)
        assert reuse["reuse_fraction"] == 1.0
        assert reapsnap.contiguity(trace)["run_count"] > 0

        try:
            reapsnap.restore(image, "prefetch", run_seq)
        except reapsnap.ReapsnapError:
            pass
        else:
            raise AssertionError("prefetch without artifacts accepted")

        print(lazy)
        print(reap)
        print(f"speedup {lazy.total_latency_us / reap.total_latency_us:.2f}x")


if __name__ == "__main__":
    main()
