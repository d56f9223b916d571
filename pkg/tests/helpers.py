from panap.data import ApplicationEvent, Session


def session(jobs, user="u", start=0, sid=None):
    events = tuple(ApplicationEvent(user, j, start + t) for t, j in enumerate(jobs))
    return Session(sid or f"{user}#{start}", user, events)


def sessions(*job_lists):
    return [session(js, start=100 * i) for i, js in enumerate(job_lists)]


def hand_corpus():
    """Ten jobs and five sessions: three for training, two held out."""
    from panap.data import Dataset, Job, JobSeeker

    states = ["TX", "TX", "GA", "GA", "CA", "TX", "GA", "CA", "TX", "GA"]
    catalog = {f"j{i}": Job(f"j{i}", (f"t{i % 3}",), f"c{i}", states[i], "US") for i in range(10)}
    seekers = {u: JobSeeker(u, "c0", "TX", "US", "BS", "cs") for u in ("u1", "u2", "u3")}
    train = [
        session(["j0", "j1", "j2", "j3"], "u1", 0),
        session(["j4", "j5", "j1", "j6"], "u2", 100),
        session(["j7", "j8", "j9", "j1", "j0"], "u3", 200),
    ]
    test = [
        session(["j1", "j0", "j5"], "u1", 10_000),
        session(["j2", "j9", "j4", "j8"], "u2", 10_100),
    ]
    return Dataset(catalog, seekers, train, test)
