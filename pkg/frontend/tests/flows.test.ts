// End-to-end shell: list -> open -> resolve -> back to list, against the
// fixture store's state machine.

import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest'

import { createApi } from '../src/api.js'
import { renderList, startApp } from '../src/main.js'
import { FixtureStore } from './fixture_store.js'

const flush = async (times = 4) => {
  for (let i = 0; i < times; i++) await Promise.resolve()
}

beforeEach(() => {
  document.body.innerHTML = ''
  window.plateforgeNoAutostart = true
})

afterEach(() => {
  vi.useRealTimers()
})

describe('app shell', () => {
  it('renders the pending list and opens a selection session', async () => {
    const store = new FixtureStore()
    store.addSelection(2)
    store.addAssessment()
    const root = document.createElement('div')
    document.body.append(root)

    const app = startApp(root, createApi(store.fetch))
    await flush()
    const buttons = [...root.querySelectorAll('button[data-session]')]
    expect(buttons).toHaveLength(2)

    ;(buttons[0] as HTMLButtonElement).click()
    await flush()
    expect(root.querySelectorAll('button.candidate')).toHaveLength(2)
    app.stop()
  })

  it('drives a selection to resolution and returns to the list', async () => {
    const store = new FixtureStore()
    const session = store.addSelection(3)
    const root = document.createElement('div')
    document.body.append(root)
    const app = startApp(root, createApi(store.fetch))
    await flush()
    ;([...root.querySelectorAll('button[data-session]')][0] as HTMLButtonElement).click()
    await flush()
    ;(root.querySelectorAll('button.candidate')[2] as HTMLButtonElement).click()
    ;(root.querySelector('button.confirm') as HTMLButtonElement).click()
    await flush()
    expect(store.get(session.id)?.state).toBe('resolved')
    expect(store.get(session.id)?.resolution).toEqual({ index: 2 })
    // the resolved session no longer appears in the refreshed list
    expect(root.querySelectorAll('button[data-session]')).toHaveLength(0)
    app.stop()
  })

  it('polls the session list on an interval', async () => {
    vi.useFakeTimers()
    const store = new FixtureStore()
    const root = document.createElement('div')
    document.body.append(root)
    const app = startApp(root, createApi(store.fetch))
    await vi.advanceTimersByTimeAsync(10)
    expect(root.querySelectorAll('button[data-session]')).toHaveLength(0)

    store.addAssessment()
    await vi.advanceTimersByTimeAsync(2100)
    expect(root.querySelectorAll('button[data-session]')).toHaveLength(1)
    app.stop()
  })

  it('renderList shows an empty-state hint', () => {
    const root = document.createElement('div')
    renderList(root, [], () => {})
    expect(root.textContent).toContain('Nothing to review')
  })
})
