"""Built-in programs, addressed by name from the CLI.

Each is a small pthread-style program rewritten against the shadow API:
an unprotected flag race, its mutex-protected twin, the classic
two-mutex deadlock, a two-philosopher livelock that acquires with a
non-blocking try, a spin-until-flag loop for fairness checks, and the
two-writer pair used to measure reduction.
"""

from __future__ import annotations

from .shadow import Api, ProgramHandle


def _data_race_flag(api: Api) -> None:
    flag = api.register_shared(0)

    def reader(a: Api) -> None:
        if a.read(flag) == 1:
            pass  # "flag is set"

    def writer(a: Api) -> None:
        a.write(flag, 0)

    t1 = api.spawn_thread(reader)
    t2 = api.spawn_thread(writer)
    api.join(t1)
    api.join(t2)


def _data_race_flag_locked(api: Api) -> None:
    flag = api.register_shared(0)
    guard = api.new_mutex()

    def reader(a: Api) -> None:
        a.mutex_lock(guard)
        a.read(flag)
        a.mutex_unlock(guard)

    def writer(a: Api) -> None:
        a.mutex_lock(guard)
        a.write(flag, 0)
        a.mutex_unlock(guard)

    t1 = api.spawn_thread(reader)
    t2 = api.spawn_thread(writer)
    api.join(t1)
    api.join(t2)


def _deadlock_two_mutexes(api: Api) -> None:
    counter = api.register_shared(0)
    a = api.new_mutex()
    b = api.new_mutex()

    def incrementer(x: Api) -> None:
        x.mutex_lock(a)
        x.mutex_lock(b)
        x.write(counter, x.read(counter) + 1)
        x.mutex_unlock(b)
        x.mutex_unlock(a)

    def decrementer(x: Api) -> None:
        x.mutex_lock(b)
        x.mutex_lock(a)
        x.write(counter, x.read(counter) - 1)
        x.mutex_unlock(a)
        x.mutex_unlock(b)

    t1 = api.spawn_thread(incrementer)
    t2 = api.spawn_thread(decrementer)
    api.join(t1)
    api.join(t2)


def _livelock_philosophers(api: Api) -> None:
    forks = [api.new_mutex(), api.new_mutex()]

    def make_philosopher(i: int):
        first, second = forks[i], forks[(i + 1) % 2]

        def philosopher(a: Api) -> None:
            while True:
                a.mutex_lock(first)
                if a.mutex_trylock(second):
                    break
                a.mutex_unlock(first)
            # eat
            a.mutex_unlock(first)
            a.mutex_unlock(second)

        return philosopher

    t1 = api.spawn_thread(make_philosopher(0))
    t2 = api.spawn_thread(make_philosopher(1))
    api.join(t1)
    api.join(t2)


def _spin_flag(api: Api) -> None:
    flag = api.register_shared(0)

    def spinner(a: Api) -> None:
        while a.read(flag) == 0:
            pass

    def setter(a: Api) -> None:
        a.write(flag, 1)

    t1 = api.spawn_thread(spinner)
    t2 = api.spawn_thread(setter)
    api.join(t1)
    api.join(t2)


def _two_writes(shared: bool):
    def entry(api: Api) -> None:
        x = api.register_shared(0)
        y = x if shared else api.register_shared(0)

        def w1(a: Api) -> None:
            a.write(x, 1)

        def w2(a: Api) -> None:
            a.write(y, 2)

        t1 = api.spawn_thread(w1)
        t2 = api.spawn_thread(w2)
        api.join(t1)
        api.join(t2)

    return entry


PROGRAMS: dict[str, ProgramHandle] = {
    p.name: p
    for p in [
        ProgramHandle(
            name="data-race-flag",
            entry=_data_race_flag,
            declared_partitions=[4, 1, 1],
            description="unprotected read/write race on a shared flag",
        ),
        ProgramHandle(
            name="data-race-flag-locked",
            entry=_data_race_flag_locked,
            declared_partitions=[4, 3, 3],
            description="the same accesses serialized by a mutex (race-free)",
        ),
        ProgramHandle(
            name="deadlock-two-mutexes",
            entry=_deadlock_two_mutexes,
            declared_partitions=[4, 6, 6],
            description="two threads taking two mutexes in opposite order",
        ),
        ProgramHandle(
            name="livelock-philosophers",
            entry=_livelock_philosophers,
            declared_partitions=[4, 4, 4],
            description="two philosophers with lock / trylock / release retry loops",
        ),
        ProgramHandle(
            name="spin-flag",
            entry=_spin_flag,
            declared_partitions=[4, 3, 1],
            description="one thread spins reading a flag another thread sets",
        ),
        ProgramHandle(
            name="two-writes-independent",
            entry=_two_writes(shared=False),
            declared_partitions=[4, 1, 1],
            description="two threads writing two distinct cells",
        ),
        ProgramHandle(
            name="two-writes-dependent",
            entry=_two_writes(shared=True),
            declared_partitions=[4, 1, 1],
            description="two threads writing the same cell",
        ),
    ]
}


def get_program(name: str) -> ProgramHandle:
    try:
        return PROGRAMS[name]
    except KeyError:
        known = ", ".join(sorted(PROGRAMS))
        raise KeyError(f"unknown program {name!r}; available: {known}") from None
