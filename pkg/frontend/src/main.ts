import { ApiClient } from './api';
import { QueueController } from './controller';
import { mapKey } from './hotkeys';
import { render, type ViewActions } from './view';

// Served by the harness service itself at /ui; ?api= overrides for dev.
const apiBase =
  new URLSearchParams(window.location.search).get('api') ?? window.location.origin;

const controller = new QueueController(new ApiClient(apiBase));
const root = document.getElementById('app')!;
let pendingAnnotation = '';

const actions: ViewActions = {
  retry: () => void refresh(),
  open: (itemId) => void controller.openItem(itemId).then(draw),
  page: (page) => void controller.goToPage(page).then(draw),
  filterReason: (reason) =>
    void controller.setFilters({ ...controller.filters, reason }).then(draw),
  verdict: (kind) => void submit(kind),
  correct: (label) => void submit('correct', label),
  setAnnotation: (text) => {
    pendingAnnotation = text;
  },
};

async function submit(kind: 'accept' | 'reject' | 'correct', label?: string): Promise<void> {
  const outcome = await controller.submit(kind, label, pendingAnnotation || undefined);
  if (!outcome.ok && outcome.message) {
    controller.lastConfirmation = outcome.conflict
      ? `conflict: ${outcome.message}`
      : `rejected: ${outcome.message}`;
  }
  pendingAnnotation = '';
  draw();
}

function draw(): void {
  render(root, controller, actions);
}

async function refresh(): Promise<void> {
  await controller.loadQueue();
  draw();
}

document.addEventListener('keydown', (event) => {
  const target = event.target as HTMLElement | null;
  const inEditable =
    !!target && (target.tagName === 'TEXTAREA' || target.tagName === 'INPUT');
  const action = mapKey({ key: event.key, inEditable });
  switch (action.kind) {
    case 'verdict':
      void submit(action.verdict);
      break;
    case 'move':
      action.delta === 1 ? controller.selectNext() : controller.selectPrevious();
      draw();
      break;
    case 'open':
      void controller.openSelected().then(draw);
      break;
    case 'page':
      void controller.goToPage(controller.page + action.delta).then(draw);
      break;
    case 'start_correct':
    case 'none':
      break;
  }
});

void refresh();
