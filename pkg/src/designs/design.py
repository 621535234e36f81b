import abc


class Design(metaclass=abc.ABCMeta):
    """
    A simulation study: independent replications plus a scoring step.
    """

    name = "design"

    @classmethod
    def __subclasshook__(cls, subclass):
        return (
            hasattr(subclass, "run_replication")
            and callable(subclass.run_replication)
            and hasattr(subclass, "summarize")
            and callable(subclass.summarize)
            or NotImplemented
        )

    @abc.abstractmethod
    def run_replication(self, rep, seed_sequence):
        """
        Run one replication and return its trace rows (list of dicts).

        Every row carries the injected truth next to the estimate, so scoring never
        recomputes a truth.
        """
        raise NotImplementedError

    @abc.abstractmethod
    def summarize(self, trace, runtime, invalid):
        """
        Turn the trace DataFrame of all replications into a SimReport.
        """
        raise NotImplementedError
