// Keyboard-first triage: annotators process queues in bulk without the mouse.

export type HotkeyAction =
  | { kind: 'verdict'; verdict: 'accept' | 'reject' }
  | { kind: 'start_correct' }
  | { kind: 'move'; delta: 1 | -1 }
  | { kind: 'open' }
  | { kind: 'page'; delta: 1 | -1 }
  | { kind: 'none' };

export interface KeyInput {
  key: string;
  inEditable: boolean; // focus is in a text field; hotkeys must not fire
}

export function mapKey(input: KeyInput): HotkeyAction {
  if (input.inEditable) return { kind: 'none' };
  switch (input.key) {
    case 'a':
      return { kind: 'verdict', verdict: 'accept' };
    case 'r':
      return { kind: 'verdict', verdict: 'reject' };
    case 'c':
      return { kind: 'start_correct' };
    case 'j':
    case 'ArrowDown':
      return { kind: 'move', delta: 1 };
    case 'k':
    case 'ArrowUp':
      return { kind: 'move', delta: -1 };
    case 'Enter':
    case 'o':
      return { kind: 'open' };
    case 'n':
    case 'PageDown':
      return { kind: 'page', delta: 1 };
    case 'p':
    case 'PageUp':
      return { kind: 'page', delta: -1 };
    default:
      return { kind: 'none' };
  }
}
