# heapq works on bare lists and forgets nothing about ordering,
# so keep the list private and only expose what the scheduler needs.
import heapq


class Heap:
    """Pythonic heap."""
    def __init__(self, iterable=()):
        self._heap = list(iterable)
        heapq.heapify(self._heap)

    def push(self, item):
        heapq.heappush(self._heap, item)

    def pop(self):
        return heapq.heappop(self._heap)

    def peek(self):
        return self._heap[0]

    def drain(self):
        """
        Pop every item currently queued, smallest first.
        """
        items = []
        while self._heap:
            items.append(heapq.heappop(self._heap))
        return items

    def __len__(self):
        return len(self._heap)

    def __bool__(self):
        return bool(self._heap)


class Ready:
    """
    A vertex whose predecessors have all been trained.

    Ordered by its position in the curriculum's deterministic vertex
    order, so the scheduler pops vertices the same way on every run.
    """
    def __init__(self, order, vertex):
        self.order = order
        self.vertex = vertex

    def __lt__(self, other):
        return self.order < other.order

    def __gt__(self, other):
        return self.order > other.order

    def __repr__(self):
        return f'Ready({self.order}, {self.vertex!r})'
