// App shell: poll the pending-session list, open one, run its flow, return.

import { Api, SessionSummary, createApi } from './api.js'
import { renderAssessment } from './assessment.js'
import { clear, el } from './dom.js'
import { renderSelection } from './selection.js'

const POLL_MS = 2000

export const renderList = (
  root: HTMLElement,
  sessions: SessionSummary[],
  onOpen: (id: string) => void,
): void => {
  clear(root)
  root.append(el('h2', {}, ['Pending review sessions']))
  if (sessions.length === 0) {
    root.append(el('p', { class: 'hint' }, ['Nothing to review right now.']))
    return
  }
  const list = el('ul', { class: 'sessions' })
  for (const s of sessions) {
    const extra =
      s.kind === 'selection' && s.counts.candidates !== undefined
        ? ` (${s.counts.candidates} candidates)`
        : ''
    const btn = el('button', { 'data-session': s.id }, [
      `${s.kind}${extra}`,
    ]) as HTMLButtonElement
    btn.addEventListener('click', () => onOpen(s.id))
    list.append(el('li', {}, [btn]))
  }
  root.append(list)
}

export const startApp = (root: HTMLElement, api: Api = createApi(fetch.bind(globalThis))) => {
  let timer: ReturnType<typeof setTimeout> | null = null
  let open = false

  const refresh = async () => {
    if (open) return
    try {
      const sessions = await api.listSessions()
      if (!open) renderList(root, sessions, openSession)
    } catch {
      /* transient poll failure; next tick retries */
    }
  }

  const backToList = () => {
    open = false
    void refresh()
  }

  const openSession = async (id: string) => {
    open = true
    try {
      const payload = await api.getSession(id)
      if (payload.state !== 'pending') {
        backToList()
        return
      }
      if (payload.kind === 'selection') {
        renderSelection(root, api, payload, {
          onResolved: backToList,
          onStale: backToList,
        })
      } else {
        renderAssessment(root, api, payload, {
          onResolved: backToList,
          onStale: backToList,
        })
      }
    } catch {
      backToList()
    }
  }

  const tick = async () => {
    await refresh()
    timer = setTimeout(tick, POLL_MS)
  }
  void tick()
  return {
    stop: () => {
      if (timer !== null) clearTimeout(timer)
    },
  }
}

declare global {
  interface Window {
    plateforgeNoAutostart?: boolean
  }
}

if (typeof document !== 'undefined' && !window.plateforgeNoAutostart) {
  const root = document.getElementById('app')
  if (root) startApp(root)
}
